#include "spindaq/instrument.hpp"

#include <string>

#include <boost/random/normal_distribution.hpp>

namespace spindaq {

namespace {

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

json parse_body(std::span<const std::uint8_t> payload) {
  return json::parse(payload.begin(), payload.end());
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

}  // namespace

// ---------------------------------------------------------------------------

class Scene::Analog final : public AnalogSource {
 public:
  Analog(const Scene& scene, SignalRoute route, std::uint64_t stream)
      : scene_(scene), route_(route), rng_(make_stream(scene.s_.seed, stream)) {
    const NvEnvironment& env = scene.s_.env;
    offset_volts_ = bias_at_temperature(env.channel_bias, env.temperature_c) * 1e-3;
    const double pd = route == SignalRoute::pd ? env.pd_noise_rms_volts : 0.0;
    sigma_ = std::hypot(pd, env.adc_noise_rms_volts);
  }

  void fill(std::int64_t t0, std::int64_t step, std::span<double> out) override {
    const DeviceSettings& s = scene_.s_;
    switch (route_) {
      case SignalRoute::pd: {
        const double scale = s.env.baseline_pd_volts;
        if (scene_.fm_ && s.pulse_durations_ns.empty()) {
          for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = scale * scene_.level(t0 + static_cast<std::int64_t>(i) * step) + offset_volts_;
        } else {
          std::fill(out.begin(), out.end(), scale * scene_.level(t0) + offset_volts_);
        }
        break;
      }
      case SignalRoute::ground:
        std::fill(out.begin(), out.end(), offset_volts_);
        break;
      case SignalRoute::msg0:
      case SignalRoute::msg1: {
        const MsgChannel& ch = s.msg[route_ == SignalRoute::msg0 ? 0 : 1];
        if (ch.mode == ChannelMode::dds) {
          dds_fill(ch.dds, static_cast<std::uint64_t>(t0 / kTickNs), static_cast<std::uint64_t>(step / kTickNs), out);
          for (double& v : out) v += offset_volts_;
        } else if (ch.mode == ChannelMode::pwm) {
          for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = pwm_analog(ch.pwm, static_cast<double>(t0 + static_cast<std::int64_t>(i) * step), kPwmLoopbackVolts) +
                     offset_volts_;
        } else {
          std::fill(out.begin(), out.end(), offset_volts_);
        }
        break;
      }
    }
    if (sigma_ > 0.0)
      for (double& v : out) v += sigma_ * unit_(rng_);
  }

 private:
  const Scene& scene_;
  SignalRoute route_;
  std::mt19937_64 rng_;
  boost::random::normal_distribution<double> unit_{0.0, 1.0};  // ziggurat
  double offset_volts_ = 0.0;
  double sigma_ = 0.0;
};

class Scene::Photons final : public EdgeSource {
 public:
  Photons(const Scene& scene, std::uint64_t stream) : scene_(scene), rng_(make_stream(scene.s_.seed, stream)) {}

  std::uint64_t count_edges(std::int64_t t0, std::int64_t t1) override {
    const double base = scene_.s_.env.baseline_photon_rate_hz;
    const double span = static_cast<double>(t1 - t0);
    if (scene_.fm_ && scene_.s_.pulse_durations_ns.empty()) {
      auto rate = [&](double t) { return base * scene_.level(static_cast<std::int64_t>(t)); };
      return sample_photons(rate, base, static_cast<double>(t0), span, rng_);
    }
    return sample_photons(base * scene_.level(t0), span, rng_);
  }

 private:
  const Scene& scene_;
  std::mt19937_64 rng_;
};

Scene::Scene(const DeviceSettings& settings) : s_(settings), lines_(active_lines(settings.env)), mw_(settings.mw) {
  mw_.cursor = 0;
  fm_ = mw_.fm_enabled;
  const MsgChannel& src = s_.msg[static_cast<std::size_t>(mw_.fm_source_channel)];
  if (src.mode == ChannelMode::dds) fm_source_ = src.dds;
  else fm_ = false;
  refresh_level();
  ai1_ = std::make_unique<Analog>(*this, s_.routing.ai1, 1);
  ai2_ = std::make_unique<Analog>(*this, s_.routing.ai2, 2);
  di_ = std::make_unique<Photons>(*this, 3);
  sources_ = std::make_unique<SignalSources>(SignalSources{*ai1_, *ai2_, *di_});
}

Scene::~Scene() = default;

FrontEnd Scene::front_end() const {
  if (!s_.bias.enabled) return {};
  const double t = s_.bias.temperature_c.value_or(s_.env.temperature_c);
  const BiasCorrector c(s_.bias.model, t);
  return {c, c};
}

void Scene::refresh_level() {
  if (!s_.pulse_durations_ns.empty()) {
    const double d = s_.pulse_durations_ns[edges_ % s_.pulse_durations_ns.size()];
    static_level_ = rabi_level(d, s_.env);
  } else {
    static_level_ = cw_odmr_level<double>(mw_frequency(mw_), lines_);
  }
}

void Scene::on_edge(std::int64_t, bool) {
  mw_ = mw_on_trigger(mw_);
  ++edges_;
  refresh_level();
}

double Scene::level(std::int64_t t_ns) const {
  if (fm_ && s_.pulse_durations_ns.empty())
    return cw_odmr_level<double>(fm_instantaneous_frequency(static_cast<double>(t_ns), mw_, fm_source_), lines_);
  return static_level_;
}

// ---------------------------------------------------------------------------

std::string_view to_string(RunState s) noexcept {
  switch (s) {
    case RunState::idle: return "idle";
    case RunState::running: return "running";
    case RunState::complete: return "complete";
    case RunState::stopped: return "stopped";
  }
  return "idle";
}

RunState run_state_from_string(std::string_view name) {
  for (auto s : {RunState::idle, RunState::running, RunState::complete, RunState::stopped})
    if (to_string(s) == name) return s;
  throw std::invalid_argument("unknown run state: " + std::string(name));
}

json to_json(const InstrumentStatus& s) {
  return {{"state", to_string(s.state)},
          {"pattern", to_string(s.pattern)},
          {"expected", s.expected},
          {"emitted", s.emitted},
          {"stored", s.stored},
          {"dropped_triggers", s.dropped_triggers},
          {"ring_written", s.ring_written},
          {"ring_available", s.ring_available},
          {"emulated_time_ns", s.emulated_time_ns},
          {"store_full", s.store_full}};
}

InstrumentStatus status_from_json(const json& j) {
  InstrumentStatus s;
  s.state = run_state_from_string(j.at("state").get<std::string>());
  s.pattern = pattern_from_string(j.at("pattern").get<std::string>());
  s.expected = j.at("expected").get<std::uint64_t>();
  s.emitted = j.at("emitted").get<std::uint64_t>();
  s.stored = j.at("stored").get<std::uint64_t>();
  s.dropped_triggers = j.at("dropped_triggers").get<std::uint64_t>();
  s.ring_written = j.at("ring_written").get<std::uint64_t>();
  s.ring_available = j.at("ring_available").get<std::uint64_t>();
  s.emulated_time_ns = j.at("emulated_time_ns").get<std::int64_t>();
  s.store_full = j.at("store_full").get<bool>();
  return s;
}

// ---------------------------------------------------------------------------

Instrument::Instrument(DeviceSettings initial, std::size_t store_capacity)
    : settings_(std::move(initial)), store_(store_capacity) {
  worker_ = std::thread([this] { worker_main(); });
}

Instrument::~Instrument() {
  {
    std::lock_guard lk(mu_);
    shutdown_ = true;
    ++gen_;
  }
  cv_.notify_all();
  worker_.join();
}

DeviceSettings Instrument::settings() const {
  std::lock_guard lk(mu_);
  return settings_;
}

void Instrument::require_idle() const {
  if (state_ == RunState::running) throw DeviceStateError("device is running; STOP first");
}

void Instrument::arm() {
  {
    std::lock_guard lk(mu_);
    require_idle();
    const SapConfig& sap = settings_.sap;
    validate(sap);
    if (sap.pattern == Pattern::sequence && sap.trigger_source == TriggerSource::internal_pwm &&
        settings_.msg[static_cast<std::size_t>(settings_.routing.trigger_pwm_channel)].mode != ChannelMode::pwm)
      throw DeviceStateError("trigger channel is not in PWM mode");
    store_.clear();
    ring_.clear();
    run_pattern_ = sap.pattern;
    expected_ = sap.pattern == Pattern::sequence ? sap.total_triggers() : sap.continuous_stop_after;
    emitted_ = 0;
    dropped_ = 0;
    emulated_ns_ = 0;
    store_full_ = false;
    pending_soft_ = 0;
    ++gen_;
    run_requested_ = true;
    state_ = RunState::running;
  }
  cv_.notify_all();
}

void Instrument::stop() {
  {
    std::lock_guard lk(mu_);
    if (state_ == RunState::running) state_ = RunState::stopped;
    ++gen_;
    run_requested_ = false;
  }
  cv_.notify_all();
}

void Instrument::soft_trigger() {
  {
    std::lock_guard lk(mu_);
    if (state_ != RunState::running || run_pattern_ != Pattern::sequence ||
        settings_.sap.trigger_source != TriggerSource::software)
      throw DeviceStateError("software trigger needs a running sequence armed for software triggers");
    ++pending_soft_;
  }
  cv_.notify_all();
}

InstrumentStatus Instrument::status() const {
  std::lock_guard lk(mu_);
  InstrumentStatus s;
  s.state = state_;
  s.pattern = run_pattern_;
  s.expected = expected_;
  s.emitted = emitted_;
  s.stored = store_.size();
  s.dropped_triggers = dropped_;
  s.ring_written = ring_.written();
  s.ring_available = ring_.available();
  s.emulated_time_ns = emulated_ns_;
  s.store_full = store_full_;
  return s;
}

std::vector<AcqPacket> Instrument::packets(std::size_t offset, std::size_t count) const {
  std::lock_guard lk(mu_);
  const auto v = store_.view(offset, count);
  return {v.begin(), v.end()};
}

proto::ReadGrant Instrument::drain_ring(std::size_t count) {
  std::lock_guard lk(mu_);
  if (run_pattern_ != Pattern::continuous) throw DeviceStateError("ring reads need the continuous pattern");
  if (count > kRingCapacity) throw std::invalid_argument("ring read limited to 4096 packets");
  const std::size_t limit = settings_.sap.continuous_read_max;
  const std::size_t n = count == 0 ? limit : std::min<std::size_t>(count, limit);
  if (store_.size() + std::min(n, ring_.available()) > store_.capacity())
    throw std::out_of_range("transfer area full");
  const auto batch = ring_.read(n);
  proto::ReadGrant g{static_cast<std::uint32_t>(store_.size()), static_cast<std::uint32_t>(batch.size())};
  for (const auto& p : batch) store_.append(p);
  return g;
}

bool Instrument::wait_while_running(std::chrono::milliseconds timeout) const {
  std::unique_lock lk(mu_);
  return cv_.wait_for(lk, timeout, [&] { return state_ != RunState::running; });
}

void Instrument::worker_main() {
  for (;;) {
    DeviceSettings snap;
    std::uint64_t gen = 0;
    {
      std::unique_lock lk(mu_);
      cv_.wait(lk, [&] { return shutdown_ || run_requested_; });
      if (shutdown_) return;
      run_requested_ = false;
      gen = gen_;
      snap = settings_;
    }
    execute(snap, gen);
  }
}

void Instrument::execute(const DeviceSettings& snap, std::uint64_t gen) {
  Scene scene(snap);
  if (snap.sap.pattern == Pattern::sequence) execute_sequence(snap, gen, scene);
  else execute_continuous(snap, gen, scene);
  {
    std::lock_guard lk(mu_);
    if (gen_ == gen && state_ == RunState::running) state_ = RunState::complete;
  }
  cv_.notify_all();
}

bool Instrument::publish_stored(std::uint64_t gen, const AcqPacket& p, std::uint64_t dropped, std::int64_t now_ns) {
  std::lock_guard lk(mu_);
  if (gen_ != gen) return false;
  if (!store_.append(p)) {
    store_full_ = true;
    state_ = RunState::stopped;
    ++gen_;
    cv_.notify_all();
    return false;
  }
  ++emitted_;
  dropped_ = dropped;
  emulated_ns_ = now_ns;
  return true;
}

void Instrument::execute_sequence(const DeviceSettings& snap, std::uint64_t gen, Scene& scene) {
  std::unique_ptr<TriggerSchedule> triggers;
  QueuedTriggers* soft = nullptr;
  switch (snap.sap.trigger_source) {
    case TriggerSource::internal_pwm: {
      const PwmConfig& pwm = snap.msg[static_cast<std::size_t>(snap.routing.trigger_pwm_channel)].pwm;
      const std::uint64_t high = pwm_high_ticks(pwm);
      if (high > 0 && high < pwm.period_ticks)
        triggers = std::make_unique<PeriodicTriggers>(static_cast<std::int64_t>(pwm.period_ticks) * kTickNs);
      else
        triggers = std::make_unique<QueuedTriggers>();  // a flat line never triggers
      break;
    }
    case TriggerSource::external_di:
      triggers = std::make_unique<PeriodicTriggers>(snap.external_trigger_period_ns);
      break;
    case TriggerSource::software: {
      auto q = std::make_unique<QueuedTriggers>();
      soft = q.get();
      triggers = std::move(q);
      break;
    }
  }
  SequenceRunner runner(snap.sap, *triggers, scene.sources(), scene.front_end(),
                        [&scene](std::int64_t edge, bool accepted) { scene.on_edge(edge, accepted); });
  while (!runner.complete()) {
    if (auto p = runner.step()) {
      if (!publish_stored(gen, *p, runner.dropped_triggers(), runner.window_end())) return;
      continue;
    }
    if (runner.complete()) break;
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] { return gen_ != gen || shutdown_ || (soft && pending_soft_ > 0); });
    if (gen_ != gen || shutdown_) return;
    --pending_soft_;
    lk.unlock();
    soft->push(runner.window_end());
  }
}

void Instrument::execute_continuous(const DeviceSettings& snap, std::uint64_t gen, Scene& scene) {
  ContinuousRunner runner(snap.sap, scene.sources(), scene.front_end());
  while (!runner.finished()) {
    const AcqPacket p = runner.step();
    std::lock_guard lk(mu_);
    if (gen_ != gen) return;
    ring_.write(p);
    emitted_ = runner.written();
    emulated_ns_ = runner.now_ns();
  }
}

// ---------------------------------------------------------------------------

Reply Instrument::handle(std::uint8_t opcode, std::span<const std::uint8_t> payload) {
  auto fail = [](proto::Status st, const char* what) { return Reply{st, bytes_of(what), std::nullopt}; };
  try {
    return dispatch(opcode, payload);
  } catch (const DeviceStateError& e) {
    return fail(proto::Status::err_state, e.what());
  } catch (const json::exception& e) {
    return fail(proto::Status::err_param, e.what());
  } catch (const std::out_of_range& e) {
    return fail(proto::Status::err_range, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(proto::Status::err_param, e.what());
  } catch (const std::length_error& e) {
    return fail(proto::Status::err_param, e.what());
  }
}

Reply Instrument::dispatch(std::uint8_t opcode, std::span<const std::uint8_t> payload) {
  using proto::Opcode;
  Reply r;
  switch (static_cast<Opcode>(opcode)) {
    case Opcode::hello:
      r.body = proto::encode_hello_body({std::string(proto::kIdentity), proto::kCapabilities});
      return r;
    case Opcode::set_sap: {
      const json j = parse_body(payload);
      std::lock_guard lk(mu_);
      require_idle();
      settings_.sap = sap_from_json(j, settings_.sap);
      r.body = bytes_of(to_json(settings_.sap).dump());
      return r;
    }
    case Opcode::set_dds: {
      const json j = parse_body(payload);
      std::lock_guard lk(mu_);
      require_idle();
      const auto [ch, cfg] = dds_from_json(j);
      auto& m = settings_.msg[static_cast<std::size_t>(ch)];
      m.mode = ChannelMode::dds;
      m.dds = cfg;
      r.body = bytes_of(dds_to_json(ch, cfg).dump());
      return r;
    }
    case Opcode::set_pwm: {
      const json j = parse_body(payload);
      std::lock_guard lk(mu_);
      require_idle();
      const auto [ch, cfg] = pwm_from_json(j, settings_.msg);
      auto& m = settings_.msg[static_cast<std::size_t>(ch)];
      m.mode = ChannelMode::pwm;
      m.pwm = cfg;
      r.body = bytes_of(pwm_to_json(ch, cfg).dump());
      return r;
    }
    case Opcode::set_bias: {
      const json j = parse_body(payload);
      std::lock_guard lk(mu_);
      require_idle();
      settings_.bias = bias_from_json(j, settings_.bias);
      r.body = bytes_of(to_json(settings_.bias).dump());
      return r;
    }
    case Opcode::set_env: {
      const json j = parse_body(payload);
      std::lock_guard lk(mu_);
      require_idle();
      apply_env_json(settings_, j);
      r.body = bytes_of(environment_to_json(settings_).dump());
      return r;
    }
    case Opcode::arm:
      arm();
      return r;
    case Opcode::soft_trigger:
      soft_trigger();
      return r;
    case Opcode::stop:
      stop();
      return r;
    case Opcode::status:
    {
      json body = to_json(status());
      const DeviceSettings cfg = settings();
      json channels = json::array();
      for (int i = 0; i < 2; ++i) {
        const MsgChannel& ch = cfg.msg[static_cast<std::size_t>(i)];
        json c = {{"mode", to_string(ch.mode)}};
        if (ch.mode == ChannelMode::dds) c["dds"] = dds_to_json(i, ch.dds);
        if (ch.mode == ChannelMode::pwm) c["pwm"] = pwm_to_json(i, ch.pwm);
        channels.push_back(c);
      }
      body["config"] = {{"sap", to_json(cfg.sap)}, {"msg", channels}, {"bias", to_json(cfg.bias)}, {"seed", cfg.seed}};
      r.body = bytes_of(body.dump());
    }
      return r;
    case Opcode::read: {
      const auto req = proto::decode_read_request(payload);
      proto::ReadGrant g;
      if (req.offset == proto::kRingOffset) {
        g = drain_ring(req.count);
      } else {
        std::lock_guard lk(mu_);
        if (std::uint64_t{req.offset} + req.count > store_.size())
          throw std::out_of_range("read beyond stored packets");
        g = {req.offset, req.count};
      }
      r.body = proto::encode_read_grant(g);
      r.transfer = g;
      return r;
    }
    case Opcode::ack:
    case Opcode::bye:
      break;
  }
  r.status = proto::Status::err_opcode;
  r.body = bytes_of("unsupported opcode");
  return r;
}

}  // namespace spindaq
