#include <string>
#include <vector>

#include "ruinscan/pipeline.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ruinscan::run_cli(args);
}
