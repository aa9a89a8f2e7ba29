#pragma once

#include <cstdint>

#include "spindaq/settings.hpp"

namespace spindaq {

struct EmulationBench {
  std::uint64_t ticks = 0;
  double seconds = 0.0;
  double ticks_per_second = 0.0;
};

/// Continuous acquisition on the default scene (photodiode on AI1, DDS on AI2,
/// APD counting), run by the instrument worker without a network.
EmulationBench bench_emulation(std::uint64_t packets = 4096, std::uint32_t ticks_per_packet = 4096,
                               DeviceSettings settings = {});

struct LoopbackBench {
  std::uint64_t packets = 0;
  double seconds = 0.0;
  double megabytes_per_second = 0.0;  // packet payload, 1e6 bytes
};

/// Fills the store of an in-process server on 127.0.0.1 and times one client read.
LoopbackBench bench_loopback(std::uint64_t packets = 1'000'000);

}  // namespace spindaq
