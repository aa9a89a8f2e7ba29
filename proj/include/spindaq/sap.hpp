#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "spindaq/codec.hpp"

namespace spindaq {

enum class Pattern { sequence, continuous };
enum class TriggerSource { internal_pwm, external_di, software };

std::string_view to_string(Pattern p) noexcept;
std::string_view to_string(TriggerSource t) noexcept;
Pattern pattern_from_string(std::string_view name);
TriggerSource trigger_source_from_string(std::string_view name);

inline constexpr std::uint64_t kMaxDelayNs = std::uint64_t{1} << 35;
inline constexpr std::uint64_t kMaxWindowNs = std::uint64_t{1} << 35;
inline constexpr std::size_t kRingCapacity = 4096;  // 64 KB of 16-byte packets
inline constexpr std::size_t kDefaultStoreCapacity = std::size_t{1} << 25;

struct SapConfig {
  std::uint64_t delay_ns = 0;
  std::uint64_t window_ns = 8;
  std::uint32_t points = 1;
  std::uint32_t point_repeats = 1;
  std::uint32_t sweep_repeats = 1;
  std::uint32_t continuous_read_max = kRingCapacity;
  Pattern pattern = Pattern::sequence;
  TriggerSource trigger_source = TriggerSource::software;
  /// Continuous: ticks per packet. Sequence: sampling stride inside the window.
  std::uint32_t decimation = 1;
  /// Continuous: halt after this many packets; 0 runs until stopped.
  std::uint64_t continuous_stop_after = 0;

  std::uint64_t total_triggers() const noexcept {
    return std::uint64_t{points} * point_repeats * sweep_repeats;
  }
  friend bool operator==(const SapConfig&, const SapConfig&) = default;
};

/// Throws std::invalid_argument naming the first violated limit.
void validate(const SapConfig& cfg);

struct TriggerIndex {
  std::uint32_t sweep = 0;
  std::uint32_t point = 0;
  std::uint32_t repeat = 0;
  friend bool operator==(const TriggerIndex&, const TriggerIndex&) = default;
};

/// Repeat is the innermost loop, then point, then sweep. Empty once the
/// count reaches N*R*S (sequence complete).
std::optional<TriggerIndex> classify_trigger(std::uint64_t trigger_count, const SapConfig& cfg) noexcept;

// ---------------------------------------------------------------------------
// Signal sources, evaluated in emulated nanoseconds.

class AnalogSource {
 public:
  virtual ~AnalogSource() = default;
  /// out[i] = volts at t0_ns + i * step_ns. Calls arrive in increasing time.
  virtual void fill(std::int64_t t0_ns, std::int64_t step_ns, std::span<double> out) = 0;
};

class EdgeSource {
 public:
  virtual ~EdgeSource() = default;
  /// Rising edges in [t0_ns, t1_ns).
  virtual std::uint64_t count_edges(std::int64_t t0_ns, std::int64_t t1_ns) = 0;
};

class ConstantSource final : public AnalogSource {
 public:
  explicit ConstantSource(double volts) : volts_(volts) {}
  void fill(std::int64_t, std::int64_t, std::span<double> out) override;

 private:
  double volts_;
};

class FunctionSource final : public AnalogSource {
 public:
  explicit FunctionSource(std::function<double(std::int64_t)> fn) : fn_(std::move(fn)) {}
  void fill(std::int64_t t0_ns, std::int64_t step_ns, std::span<double> out) override;

 private:
  std::function<double(std::int64_t)> fn_;
};

/// Pulses at phase_ns + k * period_ns.
class PeriodicEdges final : public EdgeSource {
 public:
  PeriodicEdges(std::int64_t period_ns, std::int64_t phase_ns = 0);
  std::uint64_t count_edges(std::int64_t t0_ns, std::int64_t t1_ns) override;

 private:
  std::int64_t period_ns_;
  std::int64_t phase_ns_;
};

class NoEdges final : public EdgeSource {
 public:
  std::uint64_t count_edges(std::int64_t, std::int64_t) override { return 0; }
};

struct SignalSources {
  AnalogSource& ai1;
  AnalogSource& ai2;
  EdgeSource& di;
};

/// ADC quantization and per-channel offset correction.
struct FrontEnd {
  BiasCorrector ai1;
  BiasCorrector ai2;
};

// ---------------------------------------------------------------------------
// Triggers.

class TriggerSchedule {
 public:
  virtual ~TriggerSchedule() = default;
  /// Next edge time, or empty when none is available (yet).
  virtual std::optional<std::int64_t> next_edge() = 0;
};

/// Edges at start_ns + k * period_ns; PWM rising edges and the pulse generator.
class PeriodicTriggers final : public TriggerSchedule {
 public:
  PeriodicTriggers(std::int64_t period_ns, std::int64_t start_ns = 0);
  std::optional<std::int64_t> next_edge() override;

 private:
  std::int64_t period_ns_;
  std::int64_t next_ns_;
};

/// Edges pushed by the host (software triggers, injected external edges).
class QueuedTriggers final : public TriggerSchedule {
 public:
  void push(std::int64_t t_ns) { pending_.push_back(t_ns); }
  std::size_t pending() const noexcept { return pending_.size(); }
  std::optional<std::int64_t> next_edge() override;

 private:
  std::deque<std::int64_t> pending_;
};

// ---------------------------------------------------------------------------
// Acquisition.

/// Averages both AI channels and counts DI edges over a span of ticks.
class SpanSampler {
 public:
  explicit SpanSampler(FrontEnd front_end = {}) : front_end_(front_end) {}

  /// Samples ticks start, start+8*stride, ... inside [start, start + 8*ticks).
  AcqPacket sample(std::int64_t start_ns, std::uint64_t ticks, std::uint32_t stride, SignalSources& sources);
  std::uint64_t last_sample_count() const noexcept { return last_samples_; }

 private:
  FrontEnd front_end_;
  std::vector<double> buf1_;
  std::vector<double> buf2_;
  std::uint64_t last_samples_ = 0;
};

/// One detection window opening at trigger + D and spanning W.
AcqPacket run_window(std::int64_t trigger_time_ns, const SapConfig& cfg, SignalSources& sources,
                     std::uint16_t point_index, const FrontEnd& front_end = {});

/// Called for every trigger edge after its window (accepted) or on rejection.
using EdgeObserver = std::function<void(std::int64_t edge_ns, bool accepted)>;

class SequenceRunner {
 public:
  SequenceRunner(const SapConfig& cfg, TriggerSchedule& triggers, SignalSources& sources,
                 FrontEnd front_end = {}, EdgeObserver observer = {});

  /// Next packet, or empty when complete or waiting for a trigger.
  std::optional<AcqPacket> step();
  bool complete() const noexcept { return emitted_ >= cfg_.total_triggers(); }
  std::uint64_t emitted() const noexcept { return emitted_; }
  std::uint64_t dropped_triggers() const noexcept { return dropped_; }
  /// Earliest time a new trigger would be accepted.
  std::int64_t window_end() const noexcept { return window_end_; }

 private:
  SapConfig cfg_;
  TriggerSchedule& triggers_;
  SignalSources& sources_;
  SpanSampler sampler_;
  EdgeObserver observer_;
  std::uint64_t emitted_ = 0;
  std::uint64_t dropped_ = 0;
  std::int64_t window_end_ = 0;
  bool any_window_ = false;
};

struct SequenceOutcome {
  std::vector<AcqPacket> packets;
  std::uint64_t dropped_triggers = 0;
};

/// Runs until N*R*S packets or the schedule runs dry.
SequenceOutcome run_sequence(const SapConfig& cfg, TriggerSchedule& triggers, SignalSources& sources,
                             FrontEnd front_end = {}, EdgeObserver observer = {});

class ContinuousRunner {
 public:
  ContinuousRunner(const SapConfig& cfg, SignalSources& sources, FrontEnd front_end = {},
                   std::int64_t start_ns = 0);

  /// One packet covering the next K ticks.
  AcqPacket step();
  std::int64_t now_ns() const noexcept { return now_ns_; }
  std::uint64_t written() const noexcept { return written_; }
  bool finished() const noexcept {
    return cfg_.continuous_stop_after != 0 && written_ >= cfg_.continuous_stop_after;
  }

 private:
  SapConfig cfg_;
  SignalSources& sources_;
  SpanSampler sampler_;
  std::int64_t now_ns_;
  std::uint64_t written_ = 0;
};

/// 4096-packet circular buffer for the continuous pattern.
class RingBuffer {
 public:
  void write(const AcqPacket& p) noexcept;
  /// Most recent min(max_count, available) packets, oldest first; everything
  /// written so far is consumed.
  std::vector<AcqPacket> read(std::size_t max_count);
  std::size_t available() const noexcept;
  std::uint64_t written() const noexcept { return written_; }
  void clear() noexcept;

 private:
  std::vector<AcqPacket> slots_ = std::vector<AcqPacket>(kRingCapacity);
  std::uint64_t written_ = 0;
  std::uint64_t consumed_ = 0;
};

/// Append-only bounded packet log standing in for the board's DDR memory.
class PacketStore {
 public:
  explicit PacketStore(std::size_t capacity = kDefaultStoreCapacity) : capacity_(capacity) {}
  /// False when full.
  bool append(const AcqPacket& p);
  std::size_t size() const noexcept { return packets_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  std::span<const AcqPacket> view(std::size_t offset, std::size_t count) const;
  void clear() noexcept { packets_.clear(); }

 private:
  std::size_t capacity_;
  std::vector<AcqPacket> packets_;
};

}  // namespace spindaq
