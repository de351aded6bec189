#include <cstdio>
int main() { std::puts("selg: placeholder"); return 0; }
