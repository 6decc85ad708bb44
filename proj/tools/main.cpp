#include <csignal>

#include "noiselab/cli.hpp"
#include "noiselab/harness.hpp"

namespace {
void on_interrupt(int) { noiselab::request_harness_stop(); }
}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_interrupt);
  return noiselab::cli_main(argc, argv);
}
