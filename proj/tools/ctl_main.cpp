#include <string>
#include <vector>

#include "ctl/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ctl::cli::run(args);
}
