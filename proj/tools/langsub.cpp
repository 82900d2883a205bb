#include <string>
#include <vector>

#include "langsub/cli.hpp"

int main(int argc, char** argv) {
  return langsub::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
