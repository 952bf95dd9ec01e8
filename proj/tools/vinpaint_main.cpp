#include <cstdio>

int main(int argc, char** argv) {
  (void)argc;
  (void)argv;
  std::printf("vinpaint: command interface under construction\n");
  return 2;
}
