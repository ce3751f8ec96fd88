// splice_cli: config-driven SPLICE experiments.
//
//   splice_cli run --config configs/lgnv1_small.json [--stage step2 --resume ck] [--seed N] [--out DIR]
//   splice_cli gen-data --source lgnv1 --trials 3000 --seed 7 --out data_dir
//   splice_cli train | geometry | eval | rrr | export-latents --config ...
//
// Exit codes: 0 ok, 2 config error, 3 numeric abort, 4 I/O or format error.

#include "splice/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace splice;

namespace {

struct Common {
  std::string config, stage, resume, out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void add_common(CLI::App* app, Common& c, bool need_config) {
  auto* opt = app->add_option("--config", c.config, "experiment config (JSON)");
  if (need_config) opt->required();
  app->add_option("--seed", c.seed, "overrides the config seed");
  app->add_option("--out", c.out, "overrides the config output_dir");
  app->add_option("--resume", c.resume, "Step-1 checkpoint to use instead of <out>/step1.ckpt");
  app->add_flag("--quiet", c.quiet, "suppress progress lines");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  return cfg;
}

int run_stages(const ExperimentConfig& cfg, const Common& c, Stage start, Stage stop) {
  RunOptions opt;
  opt.start = start;
  opt.stop = stop;
  opt.resume = c.resume;
  if (!c.quiet) opt.log = [](const std::string& s) { std::cerr << s << '\n'; };
  Experiment(cfg, opt).run();
  return 0;
}

std::vector<std::size_t> parse_dims(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t pos = 0;
    long v = -1;
    try {
      v = std::stol(tok, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != tok.size() || v < 1) throw ConfigError("--dims: expected comma-separated positive integers, got '" + s + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SPLICE: shared and private latents of paired views"};
  app.require_subcommand(1);

  Common run_c, train_c, geo_c, eval_c, rrr_c, exp_c, gen_c;
  auto* run = app.add_subcommand("run", "full pipeline gen -> step1 -> [step2] -> baselines -> metrics -> export");
  add_common(run, run_c, true);
  run->add_option("--stage", run_c.stage, "first stage to run (gen, step1, step2, baselines, metrics, export)");

  auto* train = app.add_subcommand("train", "Step 1, then Step 2 when step2.enabled");
  add_common(train, train_c, true);
  auto* geometry = app.add_subcommand("geometry", "Step 2 only, starting from a Step-1 checkpoint");
  add_common(geometry, geo_c, true);
  auto* eval = app.add_subcommand("eval", "metrics.csv, angle_curves.csv and distances.csv from trained checkpoints");
  add_common(eval, eval_c, true);
  auto* rrr = app.add_subcommand("rrr", "saturation.csv for reduced-rank regression (and any SPLICE sweep)");
  add_common(rrr, rrr_c, true);
  std::string dims;
  rrr->add_option("--dims", dims, "comma-separated ranks, e.g. 1,2,4,8,16");
  auto* exp = app.add_subcommand("export-latents", "latents.csv (and receptive_fields.csv for lgnv1)");
  add_common(exp, exp_c, true);

  auto* gen = app.add_subcommand("gen-data", "write viewA.csv, viewB.csv and truth.csv");
  add_common(gen, gen_c, false);
  std::string source;
  std::optional<long> trials;
  gen->add_option("--source", source, "lgnv1, rotated_digits, linear_toy (ignored with --config)");
  gen->add_option("--trials", trials, "sample count (lgnv1 trials or linear_toy rows)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const Stage start = run_c.stage.empty() ? (run_c.resume.empty() ? Stage::Gen : Stage::Step2)
                                              : stage_from_name(run_c.stage);
      return run_stages(resolve(run_c), run_c, start, Stage::Export);
    }
    if (*train) return run_stages(resolve(train_c), train_c, Stage::Step1, Stage::Step2);
    if (*geometry) {
      ExperimentConfig cfg = resolve(geo_c);
      if (!cfg.step2_enabled) throw ConfigError("config.step2.enabled: geometry needs step2 enabled");
      return run_stages(cfg, geo_c, Stage::Step2, Stage::Step2);
    }
    if (*eval) return run_stages(resolve(eval_c), eval_c, Stage::Metrics, Stage::Metrics);
    if (*rrr) {
      ExperimentConfig cfg = resolve(rrr_c);
      if (!dims.empty()) {
        cfg.baselines.rrr_dims = parse_dims(dims);
        cfg.baselines.splice_dims.clear();
      }
      return run_stages(cfg, rrr_c, Stage::Baselines, Stage::Baselines);
    }
    if (*exp) return run_stages(resolve(exp_c), exp_c, Stage::Export, Stage::Export);
    if (*gen) {
      ExperimentConfig cfg;
      if (!gen_c.config.empty()) {
        cfg = resolve(gen_c);
      } else {
        Json j = {{"format_version", kConfigFormatVersion}, {"data", {{"source", source.empty() ? "linear_toy" : source}}}};
        if (trials) {
          if (source == "lgnv1") j["data"]["lgnv1"]["n_trials"] = *trials;
          else if (source == "linear_toy" || source.empty()) j["data"]["linear_toy"]["n"] = *trials;
          else throw ConfigError("--trials: only lgnv1 and linear_toy take a sample count");
        }
        cfg = parse_config(j);
        if (gen_c.seed) cfg.seed = *gen_c.seed;
        cfg.output_dir = gen_c.out.empty() ? "." : gen_c.out;
      }
      // gen-data writes the CSVs straight into the output directory.
      const PairedDataset d = load_data(cfg);
      write_dataset_dir(d, cfg.output_dir, config_hash(cfg));
      if (!gen_c.quiet)
        std::cerr << "gen-data rows=" << d.size() << " n_A=" << d.x_A.cols() << " n_B=" << d.x_B.cols()
                  << " out=" << cfg.output_dir << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return 3;
  } catch (const DegenerateInputError& e) {
    std::cerr << "degenerate input: " << e.what() << '\n';
    return 3;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return 4;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return 4;
  } catch (const StateError& e) {
    std::cerr << "state error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
