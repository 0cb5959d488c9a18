#include <cstdio>

int main() {
  std::puts("xmal: subcommands not wired yet");
  return 1;
}
