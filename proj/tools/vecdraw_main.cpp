#include <string>
#include <vector>

#include "vecdraw/cli.hpp"

int main(int argc, char** argv) {
  return vecdraw::cli::run(std::vector<std::string>(argv, argv + argc));
}
