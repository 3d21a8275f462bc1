#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "mdpose/harness/dataset.hpp"
#include "mdpose/poseopt/optimize.hpp"
#include "mdpose/poseopt/train.hpp"
#include "mdpose/velest/train.hpp"

namespace mdpose::harness {

inline constexpr int kConfigSchemaVersion = 1;

// Thrown for malformed configs; what() starts with the offending field path.
class ConfigError : public InvalidInput {
 public:
  ConfigError(const std::string& field, const std::string& msg)
      : InvalidInput("config field '" + field + "': " + msg), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct ExperimentConfig {
  int schema_version{kConfigSchemaVersion};
  RadarConfig radar{};
  DatasetConfig dataset{};
  double train_fraction{0.23};
  velest::TrainConfig vel_train{.epochs = 60, .batches_per_epoch = 10, .lr_final_fraction = 0.05};
  poseopt::OptTrainConfig opt_train{.lr = 1e-2,
                                    .epochs = 300,
                                    .tpose_prob = 0.4,
                                    .joint_noise = 0.15,
                                    .lr_final_fraction = 0.05};
  poseopt::OptConfig optimize{};
  // Relative paths resolve against out_dir.
  std::string vel_checkpoint{"vel_model.bin"};
  std::string opt_checkpoint{"opt_model.bin"};
  std::string dataset_dir{"dataset"};
  std::filesystem::path out_dir{"out"};

  std::filesystem::path resolve(const std::string& p) const {
    const std::filesystem::path q(p);
    return q.is_absolute() ? q : out_dir / q;
  }

  // Training indices are the first round(train_fraction * count) samples.
  std::size_t train_count(std::size_t n) const {
    const auto k = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    return std::clamp<std::size_t>(k, 1, n > 1 ? n - 1 : 1);
  }

  // Reseed every stochastic stage from one number.
  void set_seed(std::uint64_t s) {
    dataset.seed = s;
    vel_train.seed = Rng::mix(s ^ 0x7e1ULL);
    opt_train.seed = Rng::mix(s ^ 0x0b7ULL);
  }

  void validate() const;
};

namespace detail {

// Walks a JSON object, remembers which keys were consumed and reports
// unknown or mistyped ones with their full dotted path.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  void get(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    read(j_.at(key), field(key), out);
  }

  Reader child(const std::string& key) {
    seen_.insert(key);
    return Reader(j_.at(key), field(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()), "unknown field");
  }

  const Json& json() const { return j_; }

 private:
  static void read(const Json& v, const std::string& f, double& out) {
    if (!v.is_number()) throw ConfigError(f, "expected a number");
    out = v.get<double>();
    if (!std::isfinite(out)) throw ConfigError(f, "must be finite");
  }
  static void read(const Json& v, const std::string& f, bool& out) {
    if (!v.is_boolean()) throw ConfigError(f, "expected true or false");
    out = v.get<bool>();
  }
  static void read(const Json& v, const std::string& f, int& out) {
    if (!v.is_number_integer()) throw ConfigError(f, "expected an integer");
    out = v.get<int>();
  }
  static void read(const Json& v, const std::string& f, std::size_t& out) {
    if (!v.is_number_unsigned()) throw ConfigError(f, "expected a non-negative integer");
    out = v.get<std::size_t>();
  }
  static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed fields are read as size_t");
  static void read(const Json& v, const std::string& f, std::string& out) {
    if (!v.is_string()) throw ConfigError(f, "expected a string");
    out = v.get<std::string>();
  }
  static void read(const Json& v, const std::string& f, std::filesystem::path& out) {
    std::string s;
    read(v, f, s);
    out = s;
  }
  static void read(const Json& v, const std::string& f, Vec3& out) {
    if (!v.is_array() || v.size() != 3) throw ConfigError(f, "expected [x, y, z]");
    double c[3];
    for (int i = 0; i < 3; ++i) read(v[static_cast<std::size_t>(i)], f + "[" + std::to_string(i) + "]", c[i]);
    out = {c[0], c[1], c[2]};
  }
  static void read(const Json& v, const std::string& f, std::optional<double>& out) {
    if (v.is_null()) {
      out.reset();
      return;
    }
    double d;
    read(v, f, d);
    out = d;
  }
  template <std::size_t N>
  static void read(const Json& v, const std::string& f, std::array<double, N>& out) {
    if (!v.is_array() || v.size() != N) throw ConfigError(f, "expected an array of " + std::to_string(N) + " numbers");
    for (std::size_t i = 0; i < N; ++i) read(v[i], f + "[" + std::to_string(i) + "]", out[i]);
  }
  static void read(const Json& v, const std::string& f, std::vector<ActivityKind>& out) {
    if (!v.is_array() || v.empty()) throw ConfigError(f, "expected a non-empty array of activity names");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::string s;
      read(v[i], f + "[" + std::to_string(i) + "]", s);
      try {
        out.push_back(motion::parse_activity(s));
      } catch (const InvalidInput& e) {
        throw ConfigError(f + "[" + std::to_string(i) + "]", e.what());
      }
    }
  }
  static void read(const Json& v, const std::string& f, caf::Taper& out) {
    std::string s;
    read(v, f, s);
    if (s == "hann") out = caf::Taper::hann;
    else if (s == "rectangular") out = caf::Taper::rectangular;
    else throw ConfigError(f, "expected \"hann\" or \"rectangular\"");
  }
  static void read(const Json& v, const std::string& f, denoise::Method& out) {
    std::string s;
    read(v, f, s);
    try {
      out = denoise::parse_method(s);
    } catch (const InvalidInput&) {
      throw ConfigError(f, "expected \"threshold\" or \"passthrough\"");
    }
  }
  static void read(const Json& v, const std::string& f, std::vector<wavesim::ClutterPoint>& out) {
    if (!v.is_array()) throw ConfigError(f, "expected an array");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      Reader r(v[i], f + "[" + std::to_string(i) + "]");
      wavesim::ClutterPoint c;
      r.get("position", c.position);
      r.get("amplitude", c.amplitude);
      r.finish();
      out.push_back(c);
    }
  }
  static void read(const Json& v, const std::string& f, std::vector<wavesim::MirrorPlane>& out) {
    if (!v.is_array()) throw ConfigError(f, "expected an array");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      Reader r(v[i], f + "[" + std::to_string(i) + "]");
      wavesim::MirrorPlane m;
      r.get("normal", m.normal);
      r.get("offset", m.offset);
      r.get("amplitude", m.amplitude);
      r.finish();
      out.push_back(m);
    }
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline Json vec_json(const Vec3& v) { return Json::array({v.x, v.y, v.z}); }

inline void read_denoise(Reader r, denoise::DenoiseParams& d) {
  r.get("method", d.method);
  r.get("quantile", d.quantile);
  r.get("softness", d.softness);
  r.get("renormalize", d.renormalize);
  r.get("fixed_floor", d.fixed_floor);
  r.finish();
}

inline Json denoise_json(const denoise::DenoiseParams& d) {
  return {{"method", denoise::to_string(d.method)},
          {"quantile", d.quantile},
          {"softness", d.softness},
          {"renormalize", d.renormalize},
          {"fixed_floor", d.fixed_floor ? Json(*d.fixed_floor) : Json(nullptr)}};
}

// Re-raise a validate() failure of a section as a field error.
template <class F>
void check_section(const std::string& field, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidInput& e) {
    throw ConfigError(field, e.what());
  }
}

}  // namespace detail

inline void ExperimentConfig::validate() const {
  if (schema_version != kConfigSchemaVersion)
    throw ConfigError("schema_version", "unsupported version " + std::to_string(schema_version) + " (expected " +
                                            std::to_string(kConfigSchemaVersion) + ")");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction", "must lie in (0, 1)");
  using detail::check_section;
  check_section("radar.scatterers", [&] { radar.scatterers.validate(); });
  check_section("radar.interference", [&] { radar.interference.validate(); });
  check_section("radar.spectrogram.caf", [&] { radar.spectrogram.caf.validate(); });
  check_section("radar.denoise", [&] { radar.denoise.validate(); });
  if (!(radar.bandwidth_hz > 0.0)) throw ConfigError("radar.bandwidth_hz", "must be > 0");
  if (!(radar.sample_rate_hz >= radar.bandwidth_hz)) throw ConfigError("radar.sample_rate_hz", "must be >= bandwidth_hz");
  if (!(radar.spectrogram.cpi_s > 0.0)) throw ConfigError("radar.spectrogram.cpi_s", "must be > 0");
  if (!(radar.geometry.carrier_hz > 0.0)) throw ConfigError("radar.geometry.carrier_hz", "must be > 0");
  if (dataset.count < 2) throw ConfigError("dataset.count", "need at least 2 sequences for a train/test split");
  if (!(dataset.duration_s > 0.0)) throw ConfigError("dataset.duration_s", "must be > 0");
  if (dataset.activities.empty()) throw ConfigError("dataset.activities", "must not be empty");
  if (dataset.threads < 1) throw ConfigError("dataset.threads", "must be at least 1");
  check_section("vel_train", [&] { vel_train.validate(); });
  check_section("opt_train", [&] { opt_train.validate(); });
  check_section("optimize", [&] { optimize.validate(); });
}

inline ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  detail::Reader root(j, "");
  if (!root.has("schema_version")) throw ConfigError("schema_version", "missing");
  root.get("schema_version", c.schema_version);
  if (c.schema_version != kConfigSchemaVersion) c.validate();  // reports the version

  if (root.has("radar")) {
    auto r = root.child("radar");
    auto& rc = c.radar;
    if (r.has("geometry")) {
      auto g = r.child("geometry");
      g.get("tx", rc.geometry.tx);
      g.get("rx_sur", rc.geometry.rx_sur);
      g.get("rx_ref", rc.geometry.rx_ref);
      g.get("carrier_hz", rc.geometry.carrier_hz);
      g.finish();
    }
    r.get("bandwidth_hz", rc.bandwidth_hz);
    r.get("sample_rate_hz", rc.sample_rate_hz);
    if (r.has("waveform")) {
      auto w = r.child("waveform");
      w.get("taper", rc.waveform.taper);
      w.get("projections", rc.waveform.projections);
      w.finish();
    }
    if (r.has("scatterers")) {
      auto s = r.child("scatterers");
      s.get("weights", rc.scatterers.weights);
      s.get("path_loss_exponent", rc.scatterers.path_loss_exponent);
      s.get("min_range", rc.scatterers.min_range);
      s.finish();
    }
    if (r.has("interference")) {
      auto i = r.child("interference");
      i.get("dsi_amplitude", rc.interference.dsi_amplitude);
      i.get("clutter", rc.interference.clutter);
      i.get("multipath", rc.interference.multipath);
      i.get("noise_std", rc.interference.noise_std);
      i.finish();
    }
    if (r.has("spectrogram")) {
      auto s = r.child("spectrogram");
      s.get("cpi_s", rc.spectrogram.cpi_s);
      s.get("clean_iterations", rc.spectrogram.clean_iterations);
      if (s.has("caf")) {
        auto k = s.child("caf");
        k.get("delay_bins", rc.spectrogram.caf.delay_bins);
        k.get("max_doppler_hz", rc.spectrogram.caf.max_doppler_hz);
        k.get("oversample", rc.spectrogram.caf.oversample);
        k.get("taper", rc.spectrogram.caf.taper);
        k.finish();
      }
      if (s.has("delay_window")) {
        auto w = s.child("delay_window");
        w.get("first", rc.spectrogram.window.first);
        w.get("count", rc.spectrogram.window.count);
        w.finish();
      }
      s.finish();
    }
    if (r.has("denoise")) detail::read_denoise(r.child("denoise"), rc.denoise);
    r.finish();
  }
  if (root.has("dataset")) {
    auto d = root.child("dataset");
    d.get("count", c.dataset.count);
    d.get("duration_s", c.dataset.duration_s);
    d.get("activities", c.dataset.activities);
    d.get("seed", c.dataset.seed);
    d.get("threads", c.dataset.threads);
    d.get("dir", c.dataset_dir);
    d.finish();
  }
  root.get("train_fraction", c.train_fraction);
  if (root.has("vel_train")) {
    auto t = root.child("vel_train");
    auto& v = c.vel_train;
    t.get("lr", v.lr);
    t.get("batch_size", v.batch_size);
    t.get("epochs", v.epochs);
    t.get("seed", v.seed);
    t.get("val_fraction", v.val_fraction);
    t.get("crop_frames", v.crop_frames);
    t.get("batches_per_epoch", v.batches_per_epoch);
    t.get("clip_norm", v.clip_norm);
    t.get("lr_final_fraction", v.lr_final_fraction);
    t.get("noise_max", v.noise_max);
    t.get("noise_prob", v.noise_prob);
    if (t.has("augment_denoise")) detail::read_denoise(t.child("augment_denoise"), v.augment_denoise);
    t.get("checkpoint", c.vel_checkpoint);
    t.finish();
  }
  if (root.has("opt_train")) {
    auto t = root.child("opt_train");
    auto& o = c.opt_train;
    t.get("lr", o.lr);
    t.get("batch_size", o.batch_size);
    t.get("epochs", o.epochs);
    t.get("batches_per_epoch", o.batches_per_epoch);
    t.get("seed", o.seed);
    t.get("val_fraction", o.val_fraction);
    t.get("val_pairs", o.val_pairs);
    t.get("window", o.window);
    t.get("mix_min", o.mix_min);
    t.get("velocity_noise", o.velocity_noise);
    t.get("tpose_prob", o.tpose_prob);
    t.get("joint_noise", o.joint_noise);
    t.get("lr_final_fraction", o.lr_final_fraction);
    t.get("clip_norm", o.clip_norm);
    t.get("checkpoint", c.opt_checkpoint);
    t.finish();
  }
  if (root.has("optimize")) {
    auto t = root.child("optimize");
    auto& o = c.optimize;
    t.get("optr", o.optr);
    t.get("max_epochs", o.max_epochs);
    t.get("tolerance", o.tolerance);
    t.get("period", o.period);
    t.get("window", o.window);
    t.get("anchor_root", o.anchor_root);
    t.finish();
  }
  root.get("out_dir", c.out_dir);
  root.finish();
  c.validate();
  return c;
}

inline Json to_json(const ExperimentConfig& c) {
  using detail::vec_json;
  const auto& rc = c.radar;
  Json clutter = Json::array(), mirrors = Json::array();
  for (const auto& p : rc.interference.clutter) clutter.push_back({{"position", vec_json(p.position)}, {"amplitude", p.amplitude}});
  for (const auto& m : rc.interference.multipath)
    mirrors.push_back({{"normal", vec_json(m.normal)}, {"offset", m.offset}, {"amplitude", m.amplitude}});
  Json acts = Json::array();
  for (auto a : c.dataset.activities) acts.push_back(motion::to_string(a));
  Json j;
  j["schema_version"] = c.schema_version;
  j["radar"] = {
      {"geometry",
       {{"tx", vec_json(rc.geometry.tx)},
        {"rx_sur", vec_json(rc.geometry.rx_sur)},
        {"rx_ref", vec_json(rc.geometry.rx_ref)},
        {"carrier_hz", rc.geometry.carrier_hz}}},
      {"bandwidth_hz", rc.bandwidth_hz},
      {"sample_rate_hz", rc.sample_rate_hz},
      {"waveform", {{"taper", rc.waveform.taper}, {"projections", rc.waveform.projections}}},
      {"scatterers",
       {{"weights", rc.scatterers.weights},
        {"path_loss_exponent", rc.scatterers.path_loss_exponent},
        {"min_range", rc.scatterers.min_range}}},
      {"interference",
       {{"dsi_amplitude", rc.interference.dsi_amplitude},
        {"clutter", clutter},
        {"multipath", mirrors},
        {"noise_std", rc.interference.noise_std}}},
      {"spectrogram",
       {{"cpi_s", rc.spectrogram.cpi_s},
        {"clean_iterations", rc.spectrogram.clean_iterations},
        {"caf",
         {{"delay_bins", rc.spectrogram.caf.delay_bins},
          {"max_doppler_hz", rc.spectrogram.caf.max_doppler_hz},
          {"oversample", rc.spectrogram.caf.oversample},
          {"taper", rc.spectrogram.caf.taper == caf::Taper::hann ? "hann" : "rectangular"}}},
        {"delay_window", {{"first", rc.spectrogram.window.first}, {"count", rc.spectrogram.window.count}}}}},
      {"denoise", detail::denoise_json(rc.denoise)}};
  j["dataset"] = {{"count", c.dataset.count},
                  {"duration_s", c.dataset.duration_s},
                  {"activities", acts},
                  {"seed", c.dataset.seed},
                  {"threads", c.dataset.threads},
                  {"dir", c.dataset_dir}};
  j["train_fraction"] = c.train_fraction;
  const auto& v = c.vel_train;
  j["vel_train"] = {{"lr", v.lr},
                    {"batch_size", v.batch_size},
                    {"epochs", v.epochs},
                    {"seed", v.seed},
                    {"val_fraction", v.val_fraction},
                    {"crop_frames", v.crop_frames},
                    {"batches_per_epoch", v.batches_per_epoch},
                    {"clip_norm", v.clip_norm},
                    {"lr_final_fraction", v.lr_final_fraction},
                    {"noise_max", v.noise_max},
                    {"noise_prob", v.noise_prob},
                    {"augment_denoise", detail::denoise_json(v.augment_denoise)},
                    {"checkpoint", c.vel_checkpoint}};
  const auto& o = c.opt_train;
  j["opt_train"] = {{"lr", o.lr},
                    {"batch_size", o.batch_size},
                    {"epochs", o.epochs},
                    {"batches_per_epoch", o.batches_per_epoch},
                    {"seed", o.seed},
                    {"val_fraction", o.val_fraction},
                    {"val_pairs", o.val_pairs},
                    {"window", o.window},
                    {"mix_min", o.mix_min},
                    {"velocity_noise", o.velocity_noise},
                    {"tpose_prob", o.tpose_prob},
                    {"joint_noise", o.joint_noise},
                    {"lr_final_fraction", o.lr_final_fraction},
                    {"clip_norm", o.clip_norm},
                    {"checkpoint", c.opt_checkpoint}};
  const auto& p = c.optimize;
  j["optimize"] = {{"optr", p.optr},
                   {"max_epochs", p.max_epochs},
                   {"tolerance", p.tolerance},
                   {"period", p.period},
                   {"window", p.window},
                   {"anchor_root", p.anchor_root}};
  j["out_dir"] = c.out_dir.string();
  return j;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("<root>", std::string("not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline void save_config(const std::filesystem::path& path, const ExperimentConfig& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(c).dump(2) << '\n';
}

}  // namespace mdpose::harness
