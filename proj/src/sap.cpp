#include "spindaq/sap.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "spindaq/synth.hpp"

namespace spindaq {

std::string_view to_string(Pattern p) noexcept {
  return p == Pattern::sequence ? "sequence" : "continuous";
}

std::string_view to_string(TriggerSource t) noexcept {
  switch (t) {
    case TriggerSource::internal_pwm: return "internal_pwm";
    case TriggerSource::external_di: return "external_di";
    case TriggerSource::software: return "software";
  }
  return "software";
}

Pattern pattern_from_string(std::string_view name) {
  if (name == "sequence") return Pattern::sequence;
  if (name == "continuous") return Pattern::continuous;
  throw std::invalid_argument("unknown pattern '" + std::string(name) + "'");
}

TriggerSource trigger_source_from_string(std::string_view name) {
  if (name == "internal_pwm") return TriggerSource::internal_pwm;
  if (name == "external_di") return TriggerSource::external_di;
  if (name == "software") return TriggerSource::software;
  throw std::invalid_argument("unknown trigger source '" + std::string(name) + "'");
}

void validate(const SapConfig& cfg) {
  if (cfg.delay_ns > kMaxDelayNs) throw std::invalid_argument("delay D exceeds 2^35 ns");
  if (cfg.window_ns > kMaxWindowNs) throw std::invalid_argument("window W exceeds 2^35 ns");
  if (cfg.window_ns == 0 || cfg.window_ns % kTickNs != 0)
    throw std::invalid_argument("window W must be a positive multiple of 8 ns");
  if (cfg.points == 0 || cfg.point_repeats == 0 || cfg.sweep_repeats == 0)
    throw std::invalid_argument("N, R and S must all be at least 1");
  if (cfg.continuous_read_max == 0 || cfg.continuous_read_max > kRingCapacity)
    throw std::invalid_argument("M must be within 1..4096");
  if (cfg.decimation == 0) throw std::invalid_argument("decimation K must be at least 1");
}

std::optional<TriggerIndex> classify_trigger(std::uint64_t count, const SapConfig& cfg) noexcept {
  if (cfg.points == 0 || cfg.point_repeats == 0 || count >= cfg.total_triggers()) return std::nullopt;
  TriggerIndex idx;
  idx.repeat = static_cast<std::uint32_t>(count % cfg.point_repeats);
  idx.point = static_cast<std::uint32_t>((count / cfg.point_repeats) % cfg.points);
  idx.sweep = static_cast<std::uint32_t>(count / (std::uint64_t{cfg.point_repeats} * cfg.points));
  return idx;
}

void ConstantSource::fill(std::int64_t, std::int64_t, std::span<double> out) {
  std::fill(out.begin(), out.end(), volts_);
}

void FunctionSource::fill(std::int64_t t0_ns, std::int64_t step_ns, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn_(t0_ns + static_cast<std::int64_t>(i) * step_ns);
}

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

}  // namespace

PeriodicEdges::PeriodicEdges(std::int64_t period_ns, std::int64_t phase_ns)
    : period_ns_(period_ns), phase_ns_(phase_ns) {
  if (period_ns <= 0) throw std::invalid_argument("edge period must be positive");
}

std::uint64_t PeriodicEdges::count_edges(std::int64_t t0_ns, std::int64_t t1_ns) {
  if (t1_ns <= t0_ns) return 0;
  return static_cast<std::uint64_t>(ceil_div(t1_ns - phase_ns_, period_ns_) -
                                    ceil_div(t0_ns - phase_ns_, period_ns_));
}

PeriodicTriggers::PeriodicTriggers(std::int64_t period_ns, std::int64_t start_ns)
    : period_ns_(period_ns), next_ns_(start_ns) {
  if (period_ns <= 0) throw std::invalid_argument("trigger period must be positive");
}

std::optional<std::int64_t> PeriodicTriggers::next_edge() {
  const std::int64_t t = next_ns_;
  next_ns_ += period_ns_;
  return t;
}

std::optional<std::int64_t> QueuedTriggers::next_edge() {
  if (pending_.empty()) return std::nullopt;
  const std::int64_t t = pending_.front();
  pending_.pop_front();
  return t;
}

AcqPacket SpanSampler::sample(std::int64_t start_ns, std::uint64_t ticks, std::uint32_t stride,
                              SignalSources& sources) {
  constexpr std::size_t kChunk = 4096;
  if (buf1_.size() < kChunk) {
    buf1_.resize(kChunk);
    buf2_.resize(kChunk);
  }
  const std::uint64_t n = (ticks + stride - 1) / stride;
  const std::int64_t step_ns = kTickNs * static_cast<std::int64_t>(stride);
  std::int64_t sum1 = 0;
  std::int64_t sum2 = 0;
  for (std::uint64_t done = 0; done < n;) {
    const auto len = static_cast<std::size_t>(std::min<std::uint64_t>(kChunk, n - done));
    const std::int64_t t0 = start_ns + static_cast<std::int64_t>(done) * step_ns;
    std::span<double> s1(buf1_.data(), len);
    std::span<double> s2(buf2_.data(), len);
    sources.ai1.fill(t0, step_ns, s1);
    sources.ai2.fill(t0, step_ns, s2);
    for (std::size_t i = 0; i < len; ++i) {
      // ADC output goes through the raw 14-bit code, then the sign-bit encoding.
      const SignedCode c1 = encode_raw_to_signed(decode_signed_to_raw(voltage_to_signed(s1[i])));
      const SignedCode c2 = encode_raw_to_signed(decode_signed_to_raw(voltage_to_signed(s2[i])));
      sum1 += front_end_.ai1(c1).value();
      sum2 += front_end_.ai2(c2).value();
    }
    done += len;
  }
  last_samples_ = n;
  AcqPacket p;
  p.timestamp_ns = static_cast<std::uint64_t>(start_ns) & kTimestampMask;
  if (n > 0) {
    p.ch1 = static_cast<std::int16_t>(SignedCode::clamped(round_half_away(static_cast<double>(sum1) / n)).value());
    p.ch2 = static_cast<std::int16_t>(SignedCode::clamped(round_half_away(static_cast<double>(sum2) / n)).value());
  }
  const std::int64_t end_ns = start_ns + static_cast<std::int64_t>(ticks) * kTickNs;
  p.photon_count = saturating_count(sources.di.count_edges(start_ns, end_ns));
  return p;
}

AcqPacket run_window(std::int64_t trigger_time_ns, const SapConfig& cfg, SignalSources& sources,
                     std::uint16_t point_index, const FrontEnd& front_end) {
  SpanSampler sampler(front_end);
  AcqPacket p = sampler.sample(trigger_time_ns + static_cast<std::int64_t>(cfg.delay_ns), cfg.window_ns / kTickNs,
                               cfg.decimation, sources);
  p.point_index = point_index;
  return p;
}

SequenceRunner::SequenceRunner(const SapConfig& cfg, TriggerSchedule& triggers, SignalSources& sources,
                               FrontEnd front_end, EdgeObserver observer)
    : cfg_(cfg), triggers_(triggers), sources_(sources), sampler_(front_end), observer_(std::move(observer)) {
  validate(cfg_);
}

std::optional<AcqPacket> SequenceRunner::step() {
  while (!complete()) {
    const auto edge = triggers_.next_edge();
    if (!edge) return std::nullopt;
    if (any_window_ && *edge < window_end_) {
      ++dropped_;
      if (observer_) observer_(*edge, false);
      continue;
    }
    const auto idx = classify_trigger(emitted_, cfg_);
    const std::int64_t start = *edge + static_cast<std::int64_t>(cfg_.delay_ns);
    AcqPacket p = sampler_.sample(start, cfg_.window_ns / kTickNs, cfg_.decimation, sources_);
    p.point_index = static_cast<std::uint16_t>(idx->point);
    window_end_ = start + static_cast<std::int64_t>(cfg_.window_ns);
    any_window_ = true;
    ++emitted_;
    if (observer_) observer_(*edge, true);
    return p;
  }
  return std::nullopt;
}

SequenceOutcome run_sequence(const SapConfig& cfg, TriggerSchedule& triggers, SignalSources& sources,
                             FrontEnd front_end, EdgeObserver observer) {
  SequenceRunner runner(cfg, triggers, sources, front_end, std::move(observer));
  SequenceOutcome out;
  out.packets.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(cfg.total_triggers(), 1u << 20)));
  while (auto p = runner.step()) out.packets.push_back(*p);
  out.dropped_triggers = runner.dropped_triggers();
  return out;
}

ContinuousRunner::ContinuousRunner(const SapConfig& cfg, SignalSources& sources, FrontEnd front_end,
                                   std::int64_t start_ns)
    : cfg_(cfg), sources_(sources), sampler_(front_end), now_ns_(start_ns) {
  validate(cfg_);
}

AcqPacket ContinuousRunner::step() {
  AcqPacket p = sampler_.sample(now_ns_, cfg_.decimation, 1, sources_);
  p.point_index = static_cast<std::uint16_t>(written_ & 0xFFFF);
  now_ns_ += static_cast<std::int64_t>(cfg_.decimation) * kTickNs;
  ++written_;
  return p;
}

void RingBuffer::write(const AcqPacket& p) noexcept {
  slots_[written_ % kRingCapacity] = p;
  ++written_;
}

std::size_t RingBuffer::available() const noexcept {
  return static_cast<std::size_t>(std::min<std::uint64_t>(written_ - consumed_, kRingCapacity));
}

std::vector<AcqPacket> RingBuffer::read(std::size_t max_count) {
  if (max_count > kRingCapacity) throw std::invalid_argument("ring read limited to 4096 packets");
  const std::size_t n = std::min(max_count, available());
  std::vector<AcqPacket> out;
  out.reserve(n);
  for (std::uint64_t i = written_ - n; i < written_; ++i) out.push_back(slots_[i % kRingCapacity]);
  consumed_ = written_;
  return out;
}

void RingBuffer::clear() noexcept {
  written_ = 0;
  consumed_ = 0;
}

bool PacketStore::append(const AcqPacket& p) {
  if (packets_.size() >= capacity_) return false;
  packets_.push_back(p);
  return true;
}

std::span<const AcqPacket> PacketStore::view(std::size_t offset, std::size_t count) const {
  if (offset > packets_.size() || count > packets_.size() - offset)
    throw std::out_of_range("read beyond stored packets");
  return std::span<const AcqPacket>(packets_).subspan(offset, count);
}

}  // namespace spindaq
