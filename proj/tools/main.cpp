#include <cstdio>
int main() { std::puts("seannet"); return 0; }
