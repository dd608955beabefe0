// lrf: receptive-field analysis, synthetic corpora, training and the
// kernel-size / fixed-budget experiments.
//
// Exit codes: 0 ok, 2 usage or validation error, 3 numeric failure,
// 4 receptive-field probe disagreement.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lrf/architectures.hpp"
#include "lrf/experiments.hpp"
#include "lrf/rf.hpp"
#include "lrf/trainer.hpp"

namespace fs = std::filesystem;
using OJson = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitProbe = 4;

// JSON config files: top-level keys are global options, nested objects are
// subcommands ({"seed": 3, "train": {"epochs": 5}}).
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return {}; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      input >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("malformed JSON config: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("JSON config must be an object");
    std::vector<CLI::ConfigItem> out;
    walk(j, "", {}, out);
    return out;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void walk(const nlohmann::json& j, const std::string& name, std::vector<std::string> parents,
                   std::vector<CLI::ConfigItem>& out) {
    if (j.is_object()) {
      if (!name.empty()) parents.push_back(name);
      for (auto it = j.begin(); it != j.end(); ++it) walk(*it, it.key(), parents, out);
      return;
    }
    CLI::ConfigItem item;
    item.name = name;
    item.parents = parents;
    if (j.is_array()) {
      for (const auto& v : j) item.inputs.push_back(scalar(v));
    } else {
      item.inputs = {scalar(j)};
    }
    out.push_back(std::move(item));
  }
};

struct Globals {
  std::uint64_t seed = 1;
  std::string out_dir = ".";
};

fs::path out_path(const Globals& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return fs::path(g.out_dir) / name;
}

void emit(const OJson& j) { std::cout << j.dump(2) << "\n"; }

OJson number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

// ---------------------------------------------------------------------------
// Network selection shared by rf / train / gradcheck

struct NetChoice {
  std::string arch;
  std::string spec_path;
  std::int64_t budget = 0;
  int width = 0;
  int classes = 8;

  void add_to(CLI::App* cmd, bool default_budget) {
    auto* a = cmd->add_option("--arch", arch, "Preset: standard, dilnet, tdnn, recnet, hgnet, hgnet-t2");
    auto* s = cmd->add_option("--spec", spec_path, "Network spec JSON file");
    a->excludes(s);
    cmd->add_option("--budget", budget,
                    default_budget ? "Match hidden width to this parameter count (default 25600 with --arch)"
                                   : "Match hidden width to this parameter count");
    cmd->add_option("--width", width, "Hidden width (overrides --budget)");
    cmd->add_option("--classes", classes, "Class count for presets")->check(CLI::Range(2, 1 << 20));
    use_default_budget = default_budget;
  }

  lrf::NetworkSpec resolve() const {
    lrf::NetworkSpec spec;
    if (!spec_path.empty()) {
      spec = lrf::parse_spec(lrf::io::read_text(spec_path));
    } else if (!arch.empty()) {
      auto cfg = lrf::preset(std::string_view(arch));
      cfg.num_classes = classes;
      spec = lrf::build(cfg);
    } else {
      throw lrf::Error("one of --arch or --spec is required");
    }
    if (width > 0) return lrf::with_hidden_width(spec, width);
    std::int64_t b = budget;
    if (b == 0 && use_default_budget && spec_path.empty()) b = 25600;
    if (b > 0) return lrf::match_budget(spec, b);
    return spec;
  }

  bool use_default_budget = false;
};

struct TrainFlags {
  lrf::TrainConfig cfg;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--epochs", cfg.epochs, "Training epochs")->capture_default_str();
    cmd->add_option("--batch-size", cfg.batch_size, "Crops per minibatch")->capture_default_str();
    cmd->add_option("--crop-frames", cfg.crop_frames, "Crop length in frames")->capture_default_str();
    cmd->add_option("--alpha", cfg.alpha, "Adam learning rate")->capture_default_str();
    cmd->add_option("--beta1", cfg.beta1)->capture_default_str();
    cmd->add_option("--beta2", cfg.beta2)->capture_default_str();
    cmd->add_option("--eps", cfg.eps)->capture_default_str();
    cmd->add_option("--grad-clip", cfg.grad_clip, "Global-norm clip")->capture_default_str();
    cmd->add_flag("--timing", cfg.record_time, "Record wall-clock seconds in metrics (breaks byte-stability)");
  }
};

struct CorpusFlags {
  lrf::CorpusConfig cfg;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--classes", cfg.num_classes, "Class count K")->capture_default_str();
    cmd->add_option("--train-utts", cfg.train_utts)->capture_default_str();
    cmd->add_option("--dev-utts", cfg.dev_utts)->capture_default_str();
    cmd->add_option("--eval-utts", cfg.eval_utts)->capture_default_str();
    cmd->add_option("--frames", cfg.frames_per_utt, "Frames per utterance")->capture_default_str();
    cmd->add_option("--level-range-db", cfg.level_range_db, "Segment level spread (+- dB)")->capture_default_str();
  }
};

std::vector<std::uint64_t> parse_seeds(const std::vector<std::uint64_t>& v) {
  if (v.empty()) throw lrf::Error("at least one seed is required");
  return v;
}

// ---------------------------------------------------------------------------
// Commands

OJson rf_json(const lrf::NetworkSpec& spec, const lrf::RfReport& r) {
  OJson j;
  j["family"] = lrf::family_name(r.family);
  j["rf_general"] = r.rf_general;
  j["rf_paper"] = r.rf_paper ? OJson(*r.rf_paper) : OJson(nullptr);
  j["structural_probe"] = r.structural;
  j["gradient_probe"] = r.gradient_probe;
  j["consistent"] = r.consistent();
  j["params"] = r.params;
  if (spec.family == lrf::Family::HgNet && spec.meta.contains("S")) {
    const int S = spec.meta["S"], W = spec.meta["W"], L = spec.meta["L"];
    const auto closed = lrf::rf_hg_paper(W, 2, L, S, L);
    j["encoder"] = {{"W_d", W}, {"P_d", 2}, {"L_d", L},
                    {"exact", lrf::rf_general_value(lrf::build_encoder(W, 2, L))},
                    {"paper", closed.rf_down}};
    j["stacked"] = {{"S", S}, {"exact", r.rf_general}, {"paper", closed.rf_stacked}};
  }
  auto& prof = j["jump_profile"] = OJson::array();
  for (const auto& l : r.jump_profile) prof.push_back({{"id", l.id}, {"rf", l.rf}, {"jump", l.jump}});
  return j;
}

int cmd_rf(const NetChoice& net, bool discrepancy, const std::string& emit_spec) {
  if (discrepancy) {
    OJson rows = OJson::array();
    for (const auto& d : lrf::discrepancy_report())
      rows.push_back({{"equation", d.equation}, {"config", d.config}, {"paper", d.paper}, {"exact", d.exact}});
    emit({{"discrepancies", rows}});
    return kExitOk;
  }
  const auto spec = net.resolve();
  if (!emit_spec.empty()) lrf::io::write_text(emit_spec, lrf::serialize_spec(spec));
  const auto r = lrf::rf_general(spec);
  emit(rf_json(spec, r));
  if (!r.consistent()) {
    std::cerr << "error: receptive-field routes disagree (general " << r.rf_general << ", structural "
              << r.structural << ", gradient " << r.gradient_probe << ")\n";
    return kExitProbe;
  }
  return kExitOk;
}

int cmd_data_synth(const Globals& g, CorpusFlags flags, std::string out) {
  flags.cfg.seed = g.seed;
  if (out.empty()) out = out_path(g, "corpus").string();
  const auto c = lrf::generate_corpus(flags.cfg);
  lrf::save_corpus(c, out);
  emit({{"corpus", out}, {"utterances", c.utterances.size()}, {"K", c.config.num_classes}, {"seed", g.seed}});
  return kExitOk;
}

int cmd_data_reverb(const Globals& g, const std::string& in, std::string out, double t60) {
  if (out.empty()) out = out_path(g, "corpus_reverb").string();
  const auto clean = lrf::load_corpus(in);
  const auto rev = lrf::reverberate_corpus(clean, t60, g.seed);
  lrf::save_corpus(rev, out);
  double snr = 0;
  for (std::size_t i = 0; i < rev.utterances.size(); ++i)
    snr += lrf::snr_db(clean.utterances[i].waveform, rev.utterances[i].waveform);
  snr /= static_cast<double>(std::max<std::size_t>(1, rev.utterances.size()));
  emit({{"corpus", out}, {"utterances", rev.utterances.size()}, {"t60", t60}, {"seed", g.seed},
        {"mean_snr_db", number_or_inf(snr)}});
  return kExitOk;
}

int cmd_features(const Globals& g, const std::string& wav, std::string out, bool no_cmvn) {
  const auto w = lrf::read_waveform(wav);
  auto f = lrf::melfb(w);
  if (!no_cmvn) f = lrf::cmvn(f);
  OJson j;
  j["frames"] = f.frames;
  j["dims"] = f.dims;
  j["frame_shift_ms"] = f.frame_shift_ms;
  j["frame_length_ms"] = f.frame_length_ms;
  j["cmvn"] = f.cmvn_applied;
  auto& rows = j["data"] = OJson::array();
  for (std::size_t t = 0; t < f.frames; ++t)
    rows.push_back(std::vector<double>(f.data.begin() + t * f.dims, f.data.begin() + (t + 1) * f.dims));
  if (out.empty()) out = out_path(g, "features.json").string();
  lrf::io::write_text(out, j.dump() + "\n");
  emit({{"features", out}, {"frames", f.frames}, {"dims", f.dims}});
  return kExitOk;
}

int cmd_measure(const std::string& ref, const std::string& deg) {
  const auto r = lrf::read_waveform(ref);
  const auto d = lrf::read_waveform(deg);
  emit({{"snr_db", number_or_inf(lrf::snr_db(r, d))},
        {"is", lrf::itakura_saito(r, d)},
        {"cd", lrf::cepstral_distance(r, d)}});
  return kExitOk;
}

int cmd_train(const Globals& g, const NetChoice& net, TrainFlags tf, const std::string& corpus_dir, int overfit_frames,
              int steps) {
  tf.cfg.seed = g.seed;
  const auto spec = net.resolve();
  const auto corpus = lrf::load_corpus(corpus_dir);
  if (corpus.config.num_classes != spec.num_classes)
    throw lrf::Error("corpus has " + std::to_string(corpus.config.num_classes) + " classes, network " +
                     std::to_string(spec.num_classes));
  const auto train = lrf::make_dataset(corpus, lrf::Split::Train);
  if (overfit_frames > 0) {
    if (train.size() == 0) throw lrf::Error("corpus has no training utterances");
    const auto& x = train.features[0];
    const auto n = std::min<std::size_t>(overfit_frames, x.time());
    lrf::Tensor<float> xs(1, n, x.channels());
    std::copy_n(x.data(), n * x.channels(), xs.data());
    const auto r = lrf::overfit(spec, xs, std::span<const int>(train.labels[0].data(), n), steps, tf.cfg);
    emit({{"frames", n}, {"steps", r.steps}, {"initial_ce", r.initial_ce}, {"final_ce", r.final_ce},
          {"final_acc", r.final_accuracy}, {"params", lrf::count_params(spec)}});
    return kExitOk;
  }
  const auto dev = lrf::make_dataset(corpus, lrf::Split::Dev);
  const auto result = lrf::train(spec, train, dev, tf.cfg);
  lrf::io::write_text(out_path(g, "metrics.csv").string(), lrf::metrics_csv(result.history));
  lrf::io::write_text(out_path(g, "metrics.jsonl").string(), lrf::metrics_jsonl(result.history));
  const auto ck = out_path(g, "checkpoint.lrf").string();
  lrf::save_checkpoint(ck, result.best);
  emit({{"checkpoint", ck}, {"best_epoch", result.best_epoch}, {"best_dev_acc", result.best_dev_accuracy},
        {"params", lrf::count_params(spec)}});
  return kExitOk;
}

int cmd_eval(const Globals& g, const std::string& ck_path, const std::string& corpus_dir, const std::string& split) {
  const auto ck = lrf::load_checkpoint(ck_path);
  const auto corpus = lrf::load_corpus(corpus_dir);
  const auto ds = lrf::make_dataset(corpus, lrf::parse_split(split));
  const auto m = lrf::evaluate(ck, ds, split);
  const OJson j = {{"split", split}, {"frames", ds.frames()}, {"ce", m.cross_entropy}, {"acc", m.frame_accuracy}};
  lrf::io::write_text(out_path(g, "eval_" + split + ".json").string(), j.dump(2) + "\n");
  emit(j);
  return kExitOk;
}

int cmd_sweep(const Globals& g, CorpusFlags cf, const TrainFlags& tf, const std::vector<int>& kernels,
              const std::vector<std::uint64_t>& seeds, double t60, bool clean, int width) {
  if (kernels.empty()) throw lrf::Error("at least one kernel size is required");
  cf.cfg.seed = g.seed;
  const auto data = lrf::make_corpora(cf.cfg, t60);
  std::vector<lrf::SweepRow> rows;
  if (clean) rows = lrf::run_sweep(kernels, parse_seeds(seeds), data.clean, "clean", tf.cfg, width);
  auto rev = lrf::run_sweep(kernels, parse_seeds(seeds), data.reverb, "reverb", tf.cfg, width);
  rows.insert(rows.end(), rev.begin(), rev.end());
  const auto csv = lrf::sweep_csv(rows);
  lrf::io::write_text(out_path(g, "sweep.csv").string(), csv);
  std::cout << csv;
  return kExitOk;
}

int cmd_compare(const Globals& g, CorpusFlags cf, const TrainFlags& tf, std::int64_t budget,
                const std::vector<std::string>& archs, const std::vector<std::uint64_t>& seeds, double t60) {
  std::vector<lrf::Family> fams;
  for (const auto& a : archs) fams.push_back(lrf::parse_family(a));
  if (fams.empty()) throw lrf::Error("at least one architecture is required");
  // Resolve budgets before any training so infeasible budgets fail fast.
  for (auto f : fams) (void)lrf::budget_network(f, budget, cf.cfg.num_classes);
  cf.cfg.seed = g.seed;
  const auto data = lrf::make_corpora(cf.cfg, t60);
  const auto rows = lrf::run_compare(budget, fams, parse_seeds(seeds), data, tf.cfg);
  const auto csv = lrf::compare_csv(rows);
  lrf::io::write_text(out_path(g, "compare.csv").string(), csv);
  std::cout << csv;
  return kExitOk;
}

int cmd_gradcheck(const Globals& g, const NetChoice& net, lrf::GradCheckOptions opt) {
  opt.seed = g.seed;
  const auto spec = net.resolve();
  const auto rep = lrf::grad_check(spec, opt);
  OJson j;
  j["family"] = rep.family;
  j["tolerance"] = rep.tolerance;
  j["h"] = opt.h;
  j["channels"] = rep.channels;
  j["frames"] = rep.frames;
  j["max_rel_error"] = rep.max_rel_error;
  j["passed"] = rep.passed;
  auto& ps = j["params"] = OJson::array();
  for (const auto& e : rep.params)
    ps.push_back({{"param", e.param}, {"layer", e.layer}, {"max_rel_error", e.max_rel_error},
                  {"checked", e.checked}, {"skipped", e.skipped}, {"passed", e.passed}});
  j["failing_layers"] = rep.failing_layers();
  emit(j);
  return rep.passed ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Large receptive field CNN toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file of option values");
  app.allow_config_extras(CLI::config_extras_mode::error);

  Globals g;
  app.add_option("--seed", g.seed, "Seed for all randomness")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for output files")->capture_default_str();

  // rf
  auto* rf = app.add_subcommand("rf", "Receptive-field report (exit 4 if the three routes disagree)");
  NetChoice rf_net;
  rf_net.add_to(rf, false);
  rf->add_option("spec_file", rf_net.spec_path, "Network spec JSON (same as --spec)");
  bool rf_disc = false;
  std::string rf_emit;
  rf->add_flag("--discrepancy", rf_disc, "Closed-form vs exact characterization table");
  rf->add_option("--emit-spec", rf_emit, "Also write the resolved spec JSON here");

  // data synth / data reverb
  auto* data = app.add_subcommand("data", "Synthetic corpus generation");
  data->require_subcommand(1);
  auto* synth = data->add_subcommand("synth", "Generate a clean corpus");
  CorpusFlags synth_flags;
  synth_flags.add_to(synth);
  std::string synth_out;
  synth->add_option("--out", synth_out, "Corpus directory (default <out-dir>/corpus)");
  auto* reverb = data->add_subcommand("reverb", "Reverberate a corpus");
  std::string rev_in, rev_out;
  double rev_t60 = 0.6;
  reverb->add_option("--in", rev_in, "Clean corpus directory")->required();
  reverb->add_option("--out", rev_out, "Output directory (default <out-dir>/corpus_reverb)");
  reverb->add_option("--t60", rev_t60, "Reverberation time (s)")->capture_default_str();

  // features
  auto* feats = app.add_subcommand("features", "Log-mel features of a waveform file");
  std::string feat_in, feat_out;
  bool feat_no_cmvn = false;
  feats->add_option("--wav", feat_in, "WAV or raw float64 waveform")->required();
  feats->add_option("--out", feat_out, "Output JSON (default <out-dir>/features.json)");
  feats->add_flag("--no-cmvn", feat_no_cmvn, "Skip mean/variance normalization");

  // measure
  auto* measure = app.add_subcommand("measure", "SNR, Itakura-Saito and cepstral distance");
  std::string m_ref, m_deg;
  measure->add_option("--ref", m_ref, "Reference waveform")->required();
  measure->add_option("--deg", m_deg, "Degraded waveform")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a network on a corpus");
  NetChoice train_net;
  train_net.add_to(train, true);
  TrainFlags train_flags;
  train_flags.add_to(train);
  std::string train_corpus;
  int overfit_frames = 0, overfit_steps = 200;
  train->add_option("--corpus", train_corpus, "Corpus directory")->required();
  train->add_option("--overfit", overfit_frames, "Overfit the first N frames of one utterance instead");
  train->add_option("--steps", overfit_steps, "Steps for --overfit")->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string ev_ck, ev_corpus, ev_split = "eval";
  eval->add_option("--checkpoint", ev_ck, "Checkpoint file")->required();
  eval->add_option("--corpus", ev_corpus, "Corpus directory")->required();
  eval->add_option("--split", ev_split, "train, dev or eval")->capture_default_str();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Single-layer kernel-size sweep");
  CorpusFlags sweep_corpus;
  sweep_corpus.add_to(sweep);
  TrainFlags sweep_train;
  sweep_train.add_to(sweep);
  std::vector<int> kernels{3, 9, 17, 33};
  std::vector<std::uint64_t> sweep_seeds{1, 2, 3};
  double sweep_t60 = 0.6;
  bool sweep_clean = false;
  int sweep_width = lrf::kSweepWidth;
  sweep->add_option("--kernels", kernels, "Kernel widths (odd)")->delimiter(',')->capture_default_str();
  sweep->add_option("--seeds", sweep_seeds, "Training seeds")->delimiter(',')->capture_default_str();
  sweep->add_option("--t60", sweep_t60, "Reverberation time (s)")->capture_default_str();
  sweep->add_option("--width", sweep_width, "Hidden width")->capture_default_str();
  sweep->add_flag("--clean", sweep_clean, "Also sweep the clean corpus");

  // compare
  auto* compare = app.add_subcommand("compare", "Fixed-budget family comparison");
  CorpusFlags cmp_corpus;
  cmp_corpus.add_to(compare);
  TrainFlags cmp_train;
  cmp_train.add_to(compare);
  std::int64_t cmp_budget = 25600;
  std::vector<std::string> cmp_archs{"standard", "dilnet", "recnet", "hgnet"};
  std::vector<std::uint64_t> cmp_seeds{1, 2, 3};
  double cmp_t60 = 0.6;
  compare->add_option("--budget", cmp_budget, "Parameter budget")->capture_default_str();
  compare->add_option("--archs", cmp_archs, "Families")->delimiter(',')->capture_default_str();
  compare->add_option("--seeds", cmp_seeds, "Training seeds")->delimiter(',')->capture_default_str();
  compare->add_option("--t60", cmp_t60, "Reverberation time (s)")->capture_default_str();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check (exit 3 on failure)");
  NetChoice gc_net;
  gc_net.add_to(gc, false);
  lrf::GradCheckOptions gc_opt;
  gc->add_option("--tolerance", gc_opt.tolerance)->capture_default_str();
  gc->add_option("--step", gc_opt.h, "Finite-difference step")->capture_default_str();
  gc->add_option("--channels", gc_opt.channels, "Down-scaled width (<= 8)")->capture_default_str();
  gc->add_option("--fault", gc_opt.fault_layer, "Corrupt this conv layer's backward");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*rf) return cmd_rf(rf_net, rf_disc, rf_emit);
    if (*synth) return cmd_data_synth(g, synth_flags, synth_out);
    if (*reverb) return cmd_data_reverb(g, rev_in, rev_out, rev_t60);
    if (*feats) return cmd_features(g, feat_in, feat_out, feat_no_cmvn);
    if (*measure) return cmd_measure(m_ref, m_deg);
    if (*train) return cmd_train(g, train_net, train_flags, train_corpus, overfit_frames, overfit_steps);
    if (*eval) return cmd_eval(g, ev_ck, ev_corpus, ev_split);
    if (*sweep)
      return cmd_sweep(g, sweep_corpus, sweep_train, kernels, sweep_seeds, sweep_t60, sweep_clean, sweep_width);
    if (*compare) return cmd_compare(g, cmp_corpus, cmp_train, cmp_budget, cmp_archs, cmp_seeds, cmp_t60);
    if (*gc) return cmd_gradcheck(g, gc_net, gc_opt);
  } catch (const lrf::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const lrf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
