#include <cstdio>
int main() { std::puts("ttnsim placeholder"); return 0; }
