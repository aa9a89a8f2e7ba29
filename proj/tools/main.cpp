#include <csignal>
#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
  auto on_signal = [](int) { spindaq::g_shutdown_requested = true; };
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  return spindaq::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
