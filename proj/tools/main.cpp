#include <string>
#include <vector>

#include "dmls2r/cli.hpp"

int main(int argc, char** argv) {
  return dmls2r::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
