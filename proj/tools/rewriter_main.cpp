#include "rewriter/cli.hpp"

int main(int argc, char** argv) {
  return rewriter::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
