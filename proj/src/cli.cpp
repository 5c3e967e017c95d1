#include "jigsaw/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "jigsaw/evalsuite.hpp"
#include "jigsaw/run_config.hpp"
#include "jigsaw/synth.hpp"
#include "jigsaw/trainer.hpp"

namespace jigsaw {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::filesystem::path& p, const std::string& what) {
  if (p.empty()) throw std::runtime_error(what + " not configured");
  if (!std::filesystem::exists(p)) throw std::runtime_error(what + " not found: " + p.string());
}

int cmd_permgen(std::size_t n, int grid, const std::string& objective, std::uint64_t seed, const std::string& out_path,
                std::ostream& out) {
  if (n < 1) throw UsageError("--n must be >= 1");
  const auto set = generate_permutation_set(n, grid, parse_objective(objective), seed);
  set.save(std::filesystem::path(out_path));
  out << "avg_hamming " << std::fixed << std::setprecision(4) << set.avg_hamming() << '\n';
  return 0;
}

int cmd_synth(const std::string& dir, std::size_t count, std::uint64_t seed, int size, std::ostream& out) {
  if (count < 1) throw UsageError("--count must be >= 1");
  SynthConfig sc;
  sc.size = size;
  write_synth_dataset(dir, count, sc, seed);
  out << "wrote " << count << " images to " << dir << '\n';
  return 0;
}

struct Loaded {
  RunConfig rc;
  PermutationSet set;
};

Loaded load_run(const std::string& config_path) {
  RunConfig rc = load_run_config(config_path);
  require_file(rc.permset, "permutation set");
  return {rc, PermutationSet::load(rc.permset)};
}

int cmd_train(const std::string& config_path, const std::string& resume_path, bool deterministic, std::ostream& out) {
  auto [rc, set] = load_run(config_path);
  rc.deterministic = rc.deterministic || deterministic;
  require_file(rc.manifest, "dataset manifest");
  if (rc.deterministic) Eigen::setNbThreads(1);
  const Dataset data = load_dataset(rc.manifest, rc.puzzle.resize_target);
  const CfnConfig net = rc.network(static_cast<Index>(set.size()));
  CfnModel<float> model = build_cfn(net, rc.seed);

  std::optional<Checkpoint> resume;
  if (!resume_path.empty()) resume = load_checkpoint(resume_path);

  std::filesystem::create_directories(rc.out_dir);
  auto sink = [&](const Checkpoint& c) {
    save_checkpoint(c, rc.out_dir / ("iter_" + std::to_string(c.iteration) + ".ckpt"));
  };
  const TrainResult r = train(model, data, set, rc.puzzle, rc.train, resume ? &*resume : nullptr, sink);
  save_checkpoint(r.final, rc.out_dir / "final.ckpt");
  r.log.write_csv(rc.out_dir / "metrics.csv", !rc.deterministic);
  if (!r.log.rows.empty())
    out << "final loss " << r.log.rows.back().loss << " acc " << r.log.rows.back().acc << '\n';
  out << "puzzles_per_image " << puzzles_per_image(rc.train.iterations, rc.train.batch_size, static_cast<double>(data.size()))
      << '\n';
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt_path, const std::string& manifest_override,
             std::size_t samples, std::uint64_t seed, const std::string& report, std::ostream& out) {
  auto [rc, set] = load_run(config_path);
  std::filesystem::path manifest = !manifest_override.empty() ? std::filesystem::path(manifest_override)
                                   : !rc.heldout.empty()      ? rc.heldout
                                                              : rc.manifest;
  require_file(manifest, "dataset manifest");
  if (rc.deterministic) Eigen::setNbThreads(1);
  CfnModel<float> model = model_from_checkpoint(load_checkpoint(ckpt_path));
  const Dataset data = load_dataset(manifest, rc.puzzle.resize_target);
  const double acc = puzzle_accuracy(model, data, set, rc.puzzle, samples, seed);
  out << "puzzle_accuracy " << std::fixed << std::setprecision(4) << acc << " chance "
      << 1.0 / static_cast<double>(set.size()) << '\n';
  if (!report.empty()) {
    std::ofstream os(report);
    if (!os) throw std::runtime_error("cannot open " + report + " for writing");
    os << "metric,value\npuzzle_accuracy," << acc << "\nchance," << 1.0 / static_cast<double>(set.size())
       << "\nsamples," << samples << '\n';
  }
  return 0;
}

int cmd_retrieve(const std::string& ckpt_path, const std::string& manifest, const std::string& norm,
                 const std::string& query, std::size_t k, int layers, const std::string& out_path, std::ostream& out) {
  require_file(manifest, "dataset manifest");
  CfnModel<float> model = model_from_checkpoint(load_checkpoint(ckpt_path));
  PuzzleConfig pc;
  pc.tile = static_cast<int>(model.config().tile_side);
  if (!norm.empty()) {
    const auto n = load_normalization(norm);
    pc.mean = n.mean;
    pc.stddev = n.stddev;
  }
  std::vector<Image> images;
  std::vector<std::string> ids;
  for (const auto& p : read_manifest(manifest)) {
    images.push_back(read_image(p));
    ids.push_back(p.filename().string());
  }
  const std::size_t stop = layers < 0 ? model.branch().num_layers() : static_cast<std::size_t>(layers);
  const FeatureIndex index(ids, extract_features(model.branch(), images, pc, stop));
  std::size_t qi = ids.size();
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == query || std::filesystem::path(ids[i]).stem() == query) qi = i;
  if (qi == ids.size()) {
    std::istringstream is(query);
    std::size_t v;
    if (is >> v && is.eof() && v < ids.size()) qi = v;
  }
  if (qi == ids.size()) throw std::runtime_error("query '" + query + "' is not in the manifest");
  const auto hits = retrieve(index.features().row(static_cast<Index>(qi)).transpose(), index, std::min(k, index.size()));
  std::ostringstream text;
  text << std::setprecision(6);
  write_hits(hits, text);
  if (!out_path.empty()) {
    std::ofstream os(out_path);
    if (!os) throw std::runtime_error("cannot open " + out_path + " for writing");
    os << text.str();
  }
  out << text.str();
  return 0;
}

int cmd_stats(double iters, double batch, double images, std::size_t gap_samples, std::uint64_t seed, std::ostream& out) {
  out << "puzzles_per_image " << std::fixed << std::setprecision(2) << puzzles_per_image(iters, batch, images) << '\n';
  if (gap_samples > 0) {
    const PuzzleConfig cfg;
    const Image crop(cfg.crop, cfg.crop, 3);
    Rng rng(seed);
    int lo = std::numeric_limits<int>::max(), hi = std::numeric_limits<int>::min();
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < gap_samples; ++i)
      for (const int g : adjacent_gaps(extract_tiles(crop, cfg, rng).offsets, cfg)) {
        lo = std::min(lo, g);
        hi = std::max(hi, g);
        sum += g;
        ++n;
      }
    out << "gap_min " << lo << "\ngap_max " << hi << "\ngap_mean " << std::setprecision(3) << sum / static_cast<double>(n)
        << '\n';
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Jigsaw-puzzle self-supervised pretraining toolkit", "jigsaw"};
  app.require_subcommand(1);

  std::size_t n = 100;
  int grid = 3;
  std::string objective = "max", out_path;
  std::uint64_t seed = 1;
  auto* permgen = app.add_subcommand("permgen", "Generate a permutation set");
  permgen->add_option("--n", n, "Number of permutations")->required();
  permgen->add_option("--grid", grid, "Grid side (2 or 3)");
  permgen->add_option("--objective", objective, "max, min or middle")->check(CLI::IsMember({"max", "min", "middle"}));
  permgen->add_option("--seed", seed, "RNG seed");
  permgen->add_option("--out", out_path, "Output file")->required();

  std::string dir;
  std::size_t count = 200;
  int size = 112;
  auto* synth = app.add_subcommand("synth", "Write the synthetic grating dataset");
  synth->add_option("--out", dir, "Output directory")->required();
  synth->add_option("--count", count, "Number of images");
  synth->add_option("--seed", seed, "RNG seed");
  synth->add_option("--size", size, "Image side in pixels");

  std::string config, resume, checkpoint, manifest, report, query, norm;
  bool deterministic = false;
  auto* train_cmd = app.add_subcommand("train", "Train a CFN on the permutation task");
  train_cmd->add_option("--config", config, "Run config file")->required();
  train_cmd->add_option("--resume", resume, "Checkpoint to resume from");
  train_cmd->add_flag("--deterministic", deterministic, "Force deterministic single-threaded numerics");

  std::size_t samples = 1000;
  auto* eval = app.add_subcommand("eval", "Held-out puzzle accuracy of a checkpoint");
  eval->add_option("--config", config, "Run config file")->required();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--manifest", manifest, "Dataset manifest (defaults to data.heldout, then data.manifest)");
  eval->add_option("--samples", samples, "Number of puzzles");
  eval->add_option("--seed", seed, "Puzzle sampling seed");
  eval->add_option("--report", report, "CSV report path");
  eval->add_flag("--deterministic", deterministic, "Force deterministic single-threaded numerics");

  std::size_t k = 10;
  int layers = -1;
  auto* retrieve_cmd = app.add_subcommand("retrieve", "Rank images by normalized branch-feature similarity");
  retrieve_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  retrieve_cmd->add_option("--manifest", manifest, "Gallery manifest")->required();
  retrieve_cmd->add_option("--norm", norm, "Normalization file");
  retrieve_cmd->add_option("--query", query, "Query image name or index")->required();
  retrieve_cmd->add_option("--k", k, "Number of results");
  retrieve_cmd->add_option("--layers", layers, "Branch layers to run (default: whole branch)");
  retrieve_cmd->add_option("--out", out_path, "Ranked list output file");

  double iters = 350000, batch = 256, images = 1300000;
  std::size_t gap_samples = 0;
  auto* stats = app.add_subcommand("stats", "Puzzles-per-image and tile gap statistics");
  stats->add_option("--iters", iters, "Training iterations");
  stats->add_option("--batch", batch, "Batch size");
  stats->add_option("--images", images, "Dataset size");
  stats->add_option("--gap-samples", gap_samples, "Tile extractions for gap statistics");
  stats->add_option("--seed", seed, "RNG seed for gap statistics");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "jigsaw: error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (deterministic) Eigen::setNbThreads(1);
    if (*permgen) return cmd_permgen(n, grid, objective, seed, out_path, out);
    if (*synth) return cmd_synth(dir, count, seed, size, out);
    if (*train_cmd) return cmd_train(config, resume, deterministic, out);
    if (*eval) return cmd_eval(config, checkpoint, manifest, samples, seed, report, out);
    if (*retrieve_cmd) return cmd_retrieve(checkpoint, manifest, norm, query, k, layers, out_path, out);
    if (*stats) return cmd_stats(iters, batch, images, gap_samples, seed, out);
  } catch (const UsageError& e) {
    err << "jigsaw: error: usage: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "jigsaw: error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace jigsaw
