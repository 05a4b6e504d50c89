#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "pinnkit/examples.hpp"

namespace ex = pinnkit::examples;

namespace {

constexpr int kUsageError = 2;
constexpr int kTrainingAborted = 1;

int run_example(const std::string& name, ex::Options opts, const std::optional<std::string>& loss,
                const std::optional<std::filesystem::path>& save) {
  if (loss) {
    if (*loss == "l1") {
      opts.loss = pinnkit::LossKind::l1;
    } else if (*loss == "square") {
      opts.loss = pinnkit::LossKind::square;
    } else {
      std::cerr << "error: --loss must be l1 or square\n";
      return kUsageError;
    }
  }
  try {
    auto result = ex::run(name, opts);
    ex::write_artifacts(result, opts.out, save);
    for (const auto& [k, v] : result.metrics) std::cout << k << " = " << ex::format_double(v) << '\n';
    std::cout << "final_loss = " << ex::format_double(result.train.final.total) << '\n';
    return 0;
  } catch (const pinnkit::NonFiniteGradientError& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return kTrainingAborted;
  }
}

int dump_geometry(std::size_t n, std::uint64_t seed, const std::optional<std::filesystem::path>& out) {
  const auto g = ex::letters_composite();
  const auto boundary = g.sample_boundary(n, seed);
  const auto interior = g.sample_interior(n, pinnkit::mix_seed(seed, 1));
  ex::Table t{{"x", "y", "nx", "ny", "sdf", "area", "kind"}, {}};
  for (std::size_t i = 0; i < boundary.size(); ++i) {
    t.rows.push_back({boundary.points(i, 0), boundary.points(i, 1), boundary.normals(i, 0),
                      boundary.normals(i, 1), 0.0, boundary.area[i], 0.0});
  }
  for (std::size_t i = 0; i < interior.size(); ++i) {
    t.rows.push_back({interior.points(i, 0), interior.points(i, 1), 0.0, 0.0, interior.sdf[i],
                      interior.area[i], 1.0});
  }
  const std::string csv = ex::to_csv(t);
  if (out) {
    if (out->has_parent_path()) std::filesystem::create_directories(out->parent_path());
    ex::write_atomic(*out, csv);
  } else {
    std::cout << csv;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pinnkit: physics-informed network training"};
  app.require_subcommand(1);

  ex::Options opts;
  std::string name;
  std::optional<std::string> loss;
  std::optional<std::filesystem::path> save;
  std::optional<std::size_t> iters, resample_every;
  std::optional<double> lr;
  std::optional<std::filesystem::path> checkpoint;

  auto* run = app.add_subcommand("run", "train one of the bundled examples");
  run->add_option("example", name, "example name")->required()->check(CLI::IsMember(ex::names()));
  run->add_option("--iters", iters, "training iterations");
  run->add_option("--seed", opts.seed, "random seed")->capture_default_str();
  run->add_option("--loss", loss, "observation loss for inverse-wave (l1 or square)");
  run->add_option("--lr", lr, "learning rate");
  run->add_option("--resample-every", resample_every, "iterations between resampling");
  run->add_option("--checkpoint", checkpoint, "checkpoint to start from");
  run->add_option("--save", save, "where to write the final checkpoint");
  run->add_option("--out", opts.out, "output directory")->capture_default_str();

  std::size_t n = 2000;
  std::uint64_t geo_seed = 0;
  std::optional<std::filesystem::path> geo_out;
  auto* geo = app.add_subcommand("dump-geometry", "sample the letter composite as CSV");
  geo->add_option("--n", n, "points per set")->capture_default_str();
  geo->add_option("--seed", geo_seed, "random seed")->capture_default_str();
  geo->add_option("--out", geo_out, "output file (default stdout)");

  std::string graph_name;
  auto* graph = app.add_subcommand("dump-graph", "print an example's pipeline as DOT");
  graph->add_option("example", graph_name, "example name")->required()->check(CLI::IsMember(ex::names()));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsageError;
  }

  try {
    if (run->parsed()) {
      opts.iters = iters;
      opts.lr = lr;
      opts.resample_every = resample_every;
      opts.checkpoint = checkpoint;
      if (iters && *iters == 0) {
        std::cerr << "error: --iters must be positive\n";
        return kUsageError;
      }
      return run_example(name, opts, loss, save);
    }
    if (geo->parsed()) {
      if (n == 0) {
        std::cerr << "error: --n must be positive\n";
        return kUsageError;
      }
      return dump_geometry(n, geo_seed, geo_out);
    }
    if (graph->parsed()) {
      auto setup = ex::make(graph_name, ex::Options{});
      for (const auto& d : setup.data) {
        std::cout << pinnkit::to_dot(pinnkit::build_pipeline(d, setup.nodes), graph_name + "/" + d.name);
      }
      return 0;
    }
  } catch (const pinnkit::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kTrainingAborted;
  }
  return kUsageError;
}
