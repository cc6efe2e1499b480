"""Rebuild the bundled benchmark suites and their replay transcripts.

Writes into src/magic_markup/data/tcu10/:
  suite.json             10 hand-written cases
  identity.json          same cases with the update replaced by the original
  reformat.json          same cases with a whitespace-only reformat as update
  answers_correct.json   replay transcript: a perfect model
  answers_seeded.json    replay transcript: one case each of the failure shapes

Run from the repository root: python scripts/build_fixtures.py
"""

from __future__ import annotations

import json
import re
import sys
from dataclasses import replace
from pathlib import Path

from magic_markup.bench import BenchmarkCase, GenSpec, Suite
from magic_markup.client import DEFAULT_MODEL, RecordingClient, ScriptedClient
from magic_markup.evaluate import gold_answer
from magic_markup.retag import RetagConfig, build_retag_prompt

OUT = Path(__file__).resolve().parents[1] / "src" / "magic_markup" / "data" / "tcu10"
MODEL = DEFAULT_MODEL

CASES = [
    dict(
        id="tcu-01",
        language="Python",
        snippet_type="constant",
        problem="A bakery wants to price custom cake orders by weight and add a flat decoration fee.",
        snippet="The constant DECORATION_FEE holds the flat fee added to every decorated cake.",
        update="Move the pricing constants into a settings dictionary so they can be loaded from a file later.",
        original='''★DECORATION_FEE = 12.5★
PRICE_PER_KG = 18.0


def cake_price(weight_kg, decorated):
    price = weight_kg * PRICE_PER_KG
    if decorated:
        price += DECORATION_FEE
    return round(price, 2)


print(cake_price(1.5, True))''',
        updated='''SETTINGS = {
    "price_per_kg": 18.0,
}
★DECORATION_FEE = 12.5★


def cake_price(weight_kg, decorated, settings=SETTINGS):
    price = weight_kg * settings["price_per_kg"]
    if decorated:
        price += DECORATION_FEE
    return round(price, 2)


print(cake_price(1.5, True))''',
    ),
    dict(
        id="tcu-02",
        language="Javascript",
        snippet_type="function call",
        problem="A library kiosk shows how many days remain before a borrowed book is due.",
        snippet="The call to daysBetween computes the number of days from today until the due date.",
        update="Extract the message formatting into its own helper function.",
        original='''function daysBetween(a, b) {
  const ms = b.getTime() - a.getTime();
  return Math.ceil(ms / 86400000);
}

function dueMessage(title, dueDate) {
  const remaining = ★daysBetween(new Date(), dueDate)★;
  return `${title} is due in ${remaining} days`;
}

console.log(dueMessage("Dune", new Date("2030-01-01")));''',
        updated='''function daysBetween(a, b) {
  const ms = b.getTime() - a.getTime();
  return Math.ceil(ms / 86400000);
}

function formatDue(title, remaining) {
  return `${title} is due in ${remaining} days`;
}

function dueMessage(title, dueDate) {
  const remaining = ★daysBetween(new Date(), dueDate)★;
  return formatDue(title, remaining);
}

console.log(dueMessage("Dune", new Date("2030-01-01")));''',
    ),
    dict(
        id="tcu-03",
        language="C",
        snippet_type="subexpression",
        problem="A tiling company estimates the floor area of square rooms.",
        snippet="The second factor side in the product side * side that computes the area.",
        update="Print the area with two decimals and read the side length as a double.",
        original='''#include <stdio.h>

int main(void) {
    int side;
    scanf("%d", &side);
    int area = side * ★side★;
    printf("Area: %d\\n", area);
    return 0;
}''',
        updated='''#include <stdio.h>

int main(void) {
    double side;
    scanf("%lf", &side);
    double area = side * ★side★;
    printf("Area: %.2f\\n", area);
    return 0;
}''',
    ),
    dict(
        id="tcu-04",
        language="Python",
        snippet_type="loop body or code block",
        problem="A grocery checkout totals the prices of scanned items.",
        snippet="The body of the for loop, which adds each price to the running total.",
        update="Skip items with a negative price and log them instead.",
        original='''def checkout(prices):
    total = 0
    for price in prices:
★        total += price★
    return total


print(checkout([2.5, 3.0, 1.25]))''',
        updated='''import logging


def checkout(prices):
    total = 0
    for price in prices:
        if price < 0:
            logging.warning("negative price %s skipped", price)
            continue
★        total += price★
    return total


print(checkout([2.5, 3.0, 1.25]))''',
    ),
    dict(
        id="tcu-05",
        language="JSX",
        snippet_type="loop body or code block",
        problem="A real estate site lists properties with their photo, address and price.",
        snippet="The PropertyListing component that renders one property card.",
        update="Add a short comment about input validation and a bathroom count to the card.",
        original='''import React from "react";

★const PropertyListing = ({ title, address, price, bedrooms, image }) => {
  return (
    <div className="listing">
      <img src={image} alt={title} />
      <h2>{title}</h2>
      <p>{address}</p>
      <p>{bedrooms} bedrooms</p>
      <p>${price}</p>
    </div>
  );
}★

export default PropertyListing;''',
        updated='''import React from "react";

★const PropertyListing = ({ title, address, price, bedrooms, bathrooms, image }) => {
  // Input validation can be implemented here if needed for additional logic
  return (
    <div className="listing">
      <img src={image} alt={title} />
      <h2>{title}</h2>
      <p>{address}</p>
      <p>{bedrooms} bedrooms, {bathrooms} bathrooms</p>
      <p>${price}</p>
    </div>
  );
}★

export default PropertyListing;''',
    ),
    dict(
        id="tcu-06",
        language="Javascript",
        snippet_type="variable assignment",
        problem="An online shop adds sales tax to a cart subtotal.",
        snippet="The assignment of the tax rate constant TAX used when computing totals.",
        update="Rename TAX to salesTaxRate and document it.",
        original='''const TAX = 0.08;

function cartTotal(items) {
  const subtotal = items.reduce((sum, item) => sum + item.price * item.qty, 0);
  return subtotal * (1 + ★TAX★);
}

module.exports = { cartTotal };''',
        updated='''// Sales tax applied to every order.
const salesTaxRate = 0.08;

function cartTotal(items) {
  const subtotal = items.reduce((sum, item) => sum + item.price * item.qty, 0);
  return subtotal * (1 + ★salesTaxRate★);
}

module.exports = { cartTotal };''',
    ),
    dict(
        id="tcu-07",
        language="Racket",
        snippet_type="function call",
        problem="A gardening app converts a list of Fahrenheit readings to Celsius.",
        snippet="The call (map f->c readings) that converts every reading.",
        update="Round every converted reading to one decimal place.",
        original='''#lang racket

(define (f->c f)
  (* (- f 32) 5/9))

(define readings '(50 68 86))

(define celsius ★(map f->c readings)★)

(displayln celsius)''',
        updated='''#lang racket

(define (f->c f)
  (* (- f 32) 5/9))

(define (round1 x)
  (/ (round (* x 10)) 10.0))

(define readings '(50 68 86))

(define celsius (map round1 ★(map f->c readings)★))

(displayln celsius)''',
    ),
    dict(
        id="tcu-08",
        language="Racket",
        snippet_type="loop condition",
        problem="A ticket office counts down seats until a show is sold out.",
        snippet="The loop condition (> seats 0) that keeps selling while seats remain.",
        update="Stop early when the queue of customers is empty.",
        original='''#lang racket

(define (sell seats queue)
  (let loop ([seats seats] [queue queue] [sold 0])
    (if ★(> seats 0)★
        (loop (sub1 seats) (rest queue) (add1 sold))
        sold)))

(displayln (sell 3 '(a b c d)))''',
        updated='''#lang racket

(define (sell seats queue)
  (let loop ([seats seats] [queue queue] [sold 0])
    (if (and ★(> seats 0)★ (pair? queue))
        (loop (sub1 seats) (rest queue) (add1 sold))
        sold)))

(displayln (sell 3 '(a b c d)))''',
    ),
    dict(
        id="tcu-09",
        language="Python",
        snippet_type="loop condition",
        problem="A savings planner finds how many months it takes to reach a goal.",
        snippet="The while loop condition balance < goal.",
        update="Add a maximum number of months so the loop always terminates.",
        original='''def months_to_goal(balance, deposit, goal):
    months = 0
    while ★balance < goal★:
        balance += deposit
        months += 1
    return months


print(months_to_goal(100, 50, 1000))''',
        updated='''MAX_MONTHS = 600


def months_to_goal(balance, deposit, goal):
    months = 0
    while ★balance < goal★ and months < MAX_MONTHS:
        balance += deposit
        months += 1
    return months


print(months_to_goal(100, 50, 1000))''',
    ),
    dict(
        id="tcu-10",
        language="C",
        snippet_type="variable assignment",
        problem="A parking garage computes the fee for a stay given in minutes.",
        snippet="The assignment of the hourly rate to the variable rate.",
        update="Give the first hour a discounted rate.",
        original='''#include <stdio.h>

int main(void) {
    int minutes = 135;
    ★double rate = 2.5;★
    int hours = (minutes + 59) / 60;
    printf("Fee: %.2f\\n", hours * rate);
    return 0;
}''',
        updated='''#include <stdio.h>

int main(void) {
    int minutes = 135;
    ★double rate = 2.5;★
    double first_hour = 1.0;
    int hours = (minutes + 59) / 60;
    double fee = first_hour + (hours - 1) * rate;
    printf("Fee: %.2f\\n", fee);
    return 0;
}''',
    ),
]


def make_case(d: dict) -> BenchmarkCase:
    return BenchmarkCase(
        id=d["id"],
        spec=GenSpec(d["language"], d["snippet_type"]),
        problem_description=d["problem"],
        original_marked=d["original"],
        updated_marked=d["updated"],
        snippet_description=d["snippet"],
        update_description=d["update"],
        metadata={"source": "hand-written"},
    )


def reformat(marked: str) -> str:
    """Whitespace-only edit: double indentation, pad operators, add blank lines."""
    out = []
    for line in marked.split("\n"):
        stripped = line.lstrip(" ")
        indent = len(line) - len(stripped)
        line = " " * (2 * indent) + stripped
        line = re.sub(r"(?<=\S) = (?=\S)", "  =  ", line)
        out.append(line + ("  " if line.strip() else ""))
    return "\n\n".join(out)


# one deviation per failure shape; every other case gets the gold answer
SEEDED = {
    "tcu-03": lambda g: {"1": g.text, "2": g.start_line, "3": g.end_line, "4": 1},  # wrong occurrence
    "tcu-04": lambda g: {"1": g.text.strip(), "2": g.start_line, "3": g.end_line, "4": 1},  # drops indentation
    "tcu-05": lambda g: {"1": g.text, "2": g.start_line, "3": g.end_line - 1, "4": 1},  # ends a line early
    "tcu-06": lambda g: {"1": "TAX", "2": g.start_line, "3": g.end_line, "4": 1},  # copies the old text
    "tcu-09": lambda g: {"1": g.text, "2": 1, "3": 2, "4": 1},  # lines far off
}


def transcript(suite: Suite, seeded: bool, fixture: str) -> dict:
    answers = {}
    for case in suite.cases:
        gold = gold_answer(case)
        if seeded and case.id in SEEDED:
            answers[case.id] = SEEDED[case.id](gold)
        else:
            answers[case.id] = gold.to_dict()

    by_prompt = {}
    cfg = RetagConfig(model_name=MODEL)
    for case in suite.cases:
        original, seg = case.original
        req = build_retag_prompt(original, seg, case.updated_clean, cfg)
        by_prompt[req.user_text] = json.dumps(answers[case.id], ensure_ascii=False)

    recorder = RecordingClient(ScriptedClient(lambda req: by_prompt[req.user_text]), fixture=fixture)
    for case in suite.cases:
        original, seg = case.original
        recorder.complete(build_retag_prompt(original, seg, case.updated_clean, cfg))
    return recorder.transcript.to_dict()


def build() -> dict[str, str]:
    """Return file name -> content for every bundled fixture."""
    suite = Suite("tcu10", [make_case(d) for d in CASES])
    identity = Suite("tcu10-identity", [replace(c, updated_marked=c.original_marked) for c in suite.cases])
    reformatted = Suite("tcu10-reformat", [replace(c, updated_marked=reformat(c.original_marked)) for c in suite.cases])
    dump = lambda obj: json.dumps(obj, indent=2, ensure_ascii=False) + "\n"
    return {
        "suite.json": suite.dumps(),
        "identity.json": identity.dumps(),
        "reformat.json": reformatted.dumps(),
        "answers_correct.json": dump(transcript(suite, False, "tcu10-correct")),
        "answers_seeded.json": dump(transcript(suite, True, "tcu10-seeded")),
    }


def main(argv=None) -> int:
    OUT.mkdir(parents=True, exist_ok=True)
    for name, text in build().items():
        (OUT / name).write_text(text, encoding="utf-8")
        print(f"wrote {OUT / name}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
