#include <iostream>

int main() {
  std::cout << "ocgan: CLI wiring pending\n";
  return 0;
}
