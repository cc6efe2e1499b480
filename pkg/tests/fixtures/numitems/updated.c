#include <stdio.h>

int main() {
    int numItems;
    float totalAmount = 0;
    float discountedAmount = 0;

    printf("Enter the number of items in the cart: ");
    scanf("%d", &numItems);

    float prices[numItems];  // Introduce an array to store the prices of the items

    for (int i = 1; i <= numItems; i++) {
        float price;
        printf("Enter the price of item %d: ", i);
        scanf("%f", &price);

        prices[i - 1] = price;  // Store the price in the array

        totalAmount += price;
    }

    if (numItems >= 5) {
        discountedAmount = 0.1 * totalAmount;
        totalAmount -= discountedAmount;
    }

    printf("\nTotal amount: $%.2f\n", totalAmount);
    printf("Discounted amount: $%.2f\n", discountedAmount);

    return 0;
}