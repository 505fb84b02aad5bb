#include <cstdio>

int main() {
  std::printf("ctgen: command-line surface not wired yet\n");
  return 1;
}
