#include <string>
#include <vector>

#include "cip/cli.hpp"

int main(int argc, char** argv) {
  return cip::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
