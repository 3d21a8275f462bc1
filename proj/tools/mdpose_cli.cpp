// mdpose command line: each pipeline stage as a subcommand.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "mdpose/harness/pipeline.hpp"
#include "mdpose/harness/profile.hpp"
#include "mdpose/wavesim/io.hpp"

namespace fs = std::filesystem;
using namespace mdpose;
using namespace mdpose::harness;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* sub, Common& c, const char* out_help) {
  sub->add_option("--config", c.config, "experiment config (JSON)");
  sub->add_option("--seed", c.seed, "base seed");
  sub->add_option("--out", c.out, out_help);
}

ExperimentConfig load(const Common& c, bool out_is_dir) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (c.seed) cfg.set_seed(*c.seed);
  if (out_is_dir && !c.out.empty()) cfg.out_dir = c.out;
  cfg.validate();
  return cfg;
}

fs::path out_file(const Common& c, const ExperimentConfig& cfg, const char* fallback) {
  return c.out.empty() ? cfg.out_dir / fallback : fs::path(c.out);
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (!fs::is_directory(p)) throw IoError("cannot create directory " + p.string());
}

std::uint64_t seed_or(const Common& c, std::uint64_t fallback) { return c.seed ? *c.seed : fallback; }

// ---- gen-motion

struct GenMotionArgs {
  std::string activity{"W+"};
  std::string chain;
  double duration{0.0};
  std::string velocity_out;
};

int run_gen_motion(const Common& c, const GenMotionArgs& a) {
  const auto cfg = load(c, false);
  const double dur = a.duration > 0.0 ? a.duration : cfg.dataset.duration_s;
  const auto seed = seed_or(c, cfg.dataset.seed);
  motion::PoseSequence p;
  if (!a.chain.empty()) {
    const auto segs = motion::parse_chain(a.chain, dur);
    p = motion::generate_composite(segs, seed);
  } else {
    p = motion::generate_activity(motion::parse_activity(a.activity), dur, seed);
  }
  const auto path = out_file(c, cfg, "motion.pose");
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  motion::save_pose(path, p);
  if (!a.velocity_out.empty()) motion::save_velocity(a.velocity_out, motion::differentiate(p));
  std::printf("wrote %zu frames to %s\n", p.size(), path.string().c_str());
  return 0;
}

// ---- simulate

int run_simulate(const Common& c, const std::string& pose_path) {
  const auto cfg = load(c, false);
  const auto& rc = cfg.radar;
  const auto pose = motion::load_pose(pose_path);
  const auto track = radar_track(pose);
  Rng rng(seed_or(c, cfg.dataset.seed));
  const double dur = static_cast<double>(pose.size()) * pose.dt;
  const auto u = wavesim::generate_waveform(rc.bandwidth_hz, dur, rc.sample_rate_hz, rng.next_u64(), rc.waveform);
  auto ic = rc.interference;
  ic.noise_seed = rng.next_u64();
  const fs::path dir = c.out.empty() ? cfg.out_dir / "signals" : fs::path(c.out);
  ensure_dir(dir);
  wavesim::save_signal((dir / "ref.sig").string(), wavesim::synthesize_reference(u, rc.geometry));
  wavesim::save_signal((dir / "sur_clean.sig").string(),
                       wavesim::synthesize_surveillance(u, track, rc.scatterers, rc.geometry, {}));
  wavesim::save_signal((dir / "sur.sig").string(), wavesim::synthesize_surveillance(u, track, rc.scatterers, rc.geometry, ic));
  std::printf("wrote ref.sig, sur.sig, sur_clean.sig (%zu samples) to %s\n", u.size(), dir.string().c_str());
  return 0;
}

// ---- caf

int run_caf(const Common& c, const std::string& sur, const std::string& ref, bool no_clean) {
  const auto cfg = load(c, false);
  auto sp = cfg.radar.spectrogram;
  if (no_clean) sp.clean_iterations = 0;
  const auto s = caf::compute_spectrogram(wavesim::load_signal(sur), wavesim::load_signal(ref), sp);
  const auto path = out_file(c, cfg, "spectrogram.spec");
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  caf::save_spectrogram(path, s);
  std::printf("wrote %zu x %zu spectrogram to %s\n", s.bins(), s.frames(), path.string().c_str());
  return 0;
}

// ---- denoise

int run_denoise(const Common& c, const std::string& in) {
  const auto cfg = load(c, false);
  const auto d = denoise::denoise(caf::load_spectrogram(in), cfg.radar.denoise);
  const auto path = out_file(c, cfg, "denoised.spec");
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  caf::save_spectrogram(path, d);
  std::printf("wrote %s\n", path.string().c_str());
  return 0;
}

// ---- experiment stages

int run_build_dataset(const Common& c) {
  const auto cfg = load(c, true);
  const auto samples = build_dataset(cfg);
  std::printf("built %zu sequences (%zu train) in %s\n", samples.size(), cfg.train_count(samples.size()),
              cfg.resolve(cfg.dataset_dir).string().c_str());
  return 0;
}

int run_train_vel(const Common& c) {
  const auto cfg = load(c, true);
  const auto all = load_experiment_dataset(cfg);
  velest::VelModel m(doppler_bins(all), cfg.vel_train.seed);
  const auto hist = train_velocity(m, all, cfg, [](const velest::EpochRecord& r) {
    std::printf("epoch %3zu  train %.5f  val %.5f  %.1fs\n", r.epoch, r.train_loss, r.val_loss, r.wall_seconds);
    std::fflush(stdout);
  });
  const auto ckpt = cfg.resolve(cfg.vel_checkpoint);
  ensure_dir(ckpt.parent_path());
  m.save(ckpt, {{"train_count", cfg.train_count(all.size())}});
  hist.write_csv(cfg.out_dir / "train_vel_log.csv");
  std::printf("saved %s\n", ckpt.string().c_str());
  return 0;
}

int run_train_opt(const Common& c) {
  const auto cfg = load(c, true);
  const auto all = load_experiment_dataset(cfg);
  poseopt::OptModel m(cfg.opt_train.seed);
  const auto hist = train_optimizer(m, all, cfg, [](const poseopt::OptEpochRecord& r) {
    std::printf("epoch %3zu  train %.5f  val %.5f  cos %.3f  %.1fs\n", r.epoch, r.train_loss, r.val_loss, r.val_cosine,
                r.wall_seconds);
    std::fflush(stdout);
  });
  const auto ckpt = cfg.resolve(cfg.opt_checkpoint);
  ensure_dir(ckpt.parent_path());
  m.save(ckpt, {{"train_count", cfg.train_count(all.size())}});
  hist.write_csv(cfg.out_dir / "train_opt_log.csv");
  std::printf("saved %s\n", ckpt.string().c_str());
  return 0;
}

struct ReconstructArgs {
  std::string spectrogram, truth, init, vel_model, opt_model;
  bool raw{false};  // input is M: denoise it first
};

int run_reconstruct(const Common& c, const ReconstructArgs& a) {
  const auto cfg = load(c, false);
  const fs::path vel_path = a.vel_model.empty() ? cfg.resolve(cfg.vel_checkpoint) : fs::path(a.vel_model);
  const fs::path opt_path = a.opt_model.empty() ? cfg.resolve(cfg.opt_checkpoint) : fs::path(a.opt_model);
  require_checkpoint(vel_path, "velocity model", "train-vel");
  auto vel = velest::VelModel::load(vel_path);
  std::optional<poseopt::OptModel> opt;
  if (fs::exists(opt_path)) opt = poseopt::OptModel::load(opt_path);

  auto spec = caf::load_spectrogram(a.spectrogram);
  if (a.raw) spec = denoise::denoise(spec, cfg.radar.denoise);
  const auto v = velest::vel_forward(vel, spec);

  std::optional<motion::PoseSequence> truth;
  if (!a.truth.empty()) {
    truth = motion::load_pose(a.truth);
    require(truth->size() == v.size(), "reconstruct: truth has " + std::to_string(truth->size()) +
                                           " frames, spectrogram has " + std::to_string(v.size()));
  }
  motion::SkeletonFrame guess = motion::t_pose();
  if (!a.init.empty()) guess = motion::load_pose(a.init)[0];
  else if (truth) guess = motion::translated(guess, (*truth)[0].root());

  motion::PoseSequence rec;
  if (opt) {
    const auto pred = poseopt::model_predictor(*opt);
    std::optional<motion::SkeletonFrame> t0;
    if (truth) t0 = (*truth)[0];
    const auto init = poseopt::optimize_initial_pose(pred, guess, v, cfg.optimize, t0);
    rec = poseopt::reconstruct_long_term(pred, init.pose, v, cfg.optimize).poses;
  } else {
    std::fprintf(stderr, "note: no optimization model at %s, integrating from the initial guess\n",
                 opt_path.string().c_str());
    rec = motion::integrate(guess, v);
  }

  const fs::path dir = c.out.empty() ? cfg.out_dir / "reconstruct" : fs::path(c.out);
  ensure_dir(dir);
  motion::save_pose(dir / "reconstructed.pose", rec);
  motion::save_velocity(dir / "velocity.vel", v);
  if (truth) {
    std::vector<double> d(rec.size());
    for (std::size_t t = 0; t < rec.size(); ++t) d[t] = 1000.0 * motion::root_relative_error(rec[t], (*truth)[t]);
    write_drift_csv(dir / "drift.csv", d);
    std::printf("final root-relative error %.1f mm\n", d.back());
  }
  std::printf("wrote %zu poses to %s\n", rec.size(), dir.string().c_str());
  return 0;
}

int run_evaluate(const Common& c, bool truth_init) {
  const auto cfg = load(c, true);
  const auto all = load_experiment_dataset(cfg);
  const auto test = copy_of(split_samples(all, cfg).test);
  require_checkpoint(cfg.resolve(cfg.vel_checkpoint), "velocity model", "train-vel");
  auto vel = velest::VelModel::load(cfg.resolve(cfg.vel_checkpoint));
  std::optional<poseopt::OptModel> opt;
  if (fs::exists(cfg.resolve(cfg.opt_checkpoint))) opt = poseopt::OptModel::load(cfg.resolve(cfg.opt_checkpoint));

  EvalModels models{network_predictor(vel), opt ? poseopt::model_predictor(*opt) : poseopt::OptPredictor{}};
  EvalOptions eo;
  eo.optimize = cfg.optimize;
  eo.init = (truth_init || !opt) ? InitMode::truth : InitMode::optimize;
  const auto rep = evaluate(test, models, eo);
  ensure_dir(cfg.out_dir);
  write_metrics_csv(cfg.out_dir / "metrics.csv", rep);
  write_drift_csv(cfg.out_dir / "drift.csv", rep.drift[kD], rep.drift[kM]);
  if (!rep.opt_traces.empty()) write_traces_csv(cfg.out_dir / "traces.csv", rep.opt_traces);
  std::cout << format_table(rep);
  std::printf("%zu held-out sequences, metrics in %s\n", test.size(), (cfg.out_dir / "metrics.csv").string().c_str());
  return 0;
}

int run_profile(const Common& c, std::size_t repeats, std::size_t frames) {
  const auto cfg = load(c, true);
  const auto all = load_experiment_dataset(cfg);
  const auto split = split_samples(all, cfg);
  require_checkpoint(cfg.resolve(cfg.vel_checkpoint), "velocity model", "train-vel");
  auto vel = velest::VelModel::load(cfg.resolve(cfg.vel_checkpoint));
  std::optional<poseopt::OptModel> opt;
  if (fs::exists(cfg.resolve(cfg.opt_checkpoint))) opt = poseopt::OptModel::load(cfg.resolve(cfg.opt_checkpoint));
  const Sample& s = *split.test.front();
  require(frames >= 2 && frames <= s.M.frames(), "profile: --frames must lie in [2, sequence length]");
  const auto window = caf::slice_frames(s.M, 0, frames);
  const auto guess = motion::translated(motion::t_pose(), s.pose[0].root());
  const auto res = profile_runtime(window, cfg.radar.denoise, vel,
                                   opt ? poseopt::model_predictor(*opt) : poseopt::OptPredictor{}, guess,
                                   cfg.optimize, repeats);
  ensure_dir(cfg.out_dir);
  write_profile_csv(cfg.out_dir / "profile.csv", res);
  std::printf("%zu frames, median over %zu runs: denoise %.4fs  network %.4fs  optimize %.4fs (%zu epochs)  total %.4fs\n",
              res.frames, res.runs.size(), res.median.denoise, res.median.network, res.median.optimize,
              res.opt_epochs, res.median.total);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mdpose: passive-radar Doppler pose reconstruction"};
  app.require_subcommand(1);

  Common c;
  GenMotionArgs gm;
  auto* gen = app.add_subcommand("gen-motion", "generate a skeleton motion sequence");
  add_common(gen, c, "pose file to write");
  gen->add_option("--activity", gm.activity, "activity label (W+, W-, TR, SD, SU, HT, CV, PU, BR)");
  gen->add_option("--chain", gm.chain, "activities joined by >, e.g. W+>TR>SD");
  gen->add_option("--duration", gm.duration, "seconds (per segment for --chain)");
  gen->add_option("--velocity-out", gm.velocity_out, "also write the joint velocities here");

  std::string pose_path;
  auto* sim = app.add_subcommand("simulate", "synthesize reference and surveillance signals for a pose file");
  add_common(sim, c, "output directory");
  sim->add_option("--pose", pose_path, "pose file")->required();

  std::string sur, ref;
  bool no_clean = false;
  auto* cafc = app.add_subcommand("caf", "CAF spectrogram from a signal pair");
  add_common(cafc, c, "spectrogram file to write");
  cafc->add_option("--sur", sur, "surveillance signal")->required();
  cafc->add_option("--ref", ref, "reference signal")->required();
  cafc->add_flag("--no-clean", no_clean, "skip direct-signal cancellation");

  std::string den_in;
  auto* den = app.add_subcommand("denoise", "denoise a spectrogram");
  add_common(den, c, "spectrogram file to write");
  den->add_option("--in", den_in, "input spectrogram")->required();

  auto* bd = app.add_subcommand("build-dataset", "simulate the S/M/D dataset");
  add_common(bd, c, "experiment directory");
  auto* tv = app.add_subcommand("train-vel", "train the velocity network");
  add_common(tv, c, "experiment directory");
  auto* to = app.add_subcommand("train-opt", "train the optimization network");
  add_common(to, c, "experiment directory");

  ReconstructArgs ra;
  auto* rec = app.add_subcommand("reconstruct", "poses from a spectrogram");
  add_common(rec, c, "output directory");
  rec->add_option("--spectrogram", ra.spectrogram, "denoised spectrogram (see --raw)")->required();
  rec->add_flag("--raw", ra.raw, "input is not denoised yet");
  rec->add_option("--truth", ra.truth, "ground-truth pose file, enables drift.csv");
  rec->add_option("--init", ra.init, "pose file whose first frame is the initial guess");
  rec->add_option("--vel-model", ra.vel_model, "velocity checkpoint");
  rec->add_option("--opt-model", ra.opt_model, "optimization checkpoint");

  bool truth_init = false;
  auto* ev = app.add_subcommand("evaluate", "held-out metrics");
  add_common(ev, c, "experiment directory");
  ev->add_flag("--truth-init", truth_init, "start integration from the true first pose");

  std::size_t repeats = 10, frames = 10;
  auto* pr = app.add_subcommand("profile", "runtime of the inference path");
  add_common(pr, c, "experiment directory");
  pr->add_option("--repeats", repeats, "timed runs");
  pr->add_option("--frames", frames, "window length in frames");

  if (argc > 1 && argv[1][0] != '-') {
    bool known = false;
    for (const auto* sub : app.get_subcommands({})) known = known || sub->get_name() == argv[1];
    if (!known) {
      std::fprintf(stderr, "error: unknown subcommand '%s' (see --help)\n", argv[1]);
      return 2;
    }
  }
  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return run_gen_motion(c, gm);
    if (*sim) return run_simulate(c, pose_path);
    if (*cafc) return run_caf(c, sur, ref, no_clean);
    if (*den) return run_denoise(c, den_in);
    if (*bd) return run_build_dataset(c);
    if (*tv) return run_train_vel(c);
    if (*to) return run_train_opt(c);
    if (*rec) return run_reconstruct(c, ra);
    if (*ev) return run_evaluate(c, truth_init);
    if (*pr) return run_profile(c, repeats, frames);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
