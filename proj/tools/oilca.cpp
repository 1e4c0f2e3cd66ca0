#include <cstdio>

int main() {
  std::puts("oilca: command-line interface not wired yet");
  return 0;
}
