#include "coup/harness/cli.hpp"

int main(int argc, char** argv) {
  return coup::harness::run_cli(argc, argv);
}
