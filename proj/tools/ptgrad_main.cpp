#include <ptgrad/config.hpp>
#include <ptgrad/types.hpp>

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>

using namespace ptgrad;

namespace {

void ensure_dir(const std::string& dir) {
  if (dir.empty() || dir == ".") return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create output directory " + dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"process-tensor dynamics, gradients, and optimal control"};
  app.require_subcommand(1);

  std::string config_path, out_dir, pt_path;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--seed", seed, "override the config-level seed");
    sub->add_option("--out", out_dir, "output directory (default from config)");
  };

  CLI::App* build =
      app.add_subcommand("build-pt", "build a process tensor and store it");
  add_common(build);
  CLI::App* dyn =
      app.add_subcommand("dynamics", "propagate and write observables");
  add_common(dyn);
  dyn->add_option("--pt", pt_path, "pre-built process tensor file");
  CLI::App* opt =
      app.add_subcommand("optimize", "gradient-based schedule optimization");
  add_common(opt);
  opt->add_option("--pt", pt_path, "pre-built process tensor file");
  CLI::App* cmp = app.add_subcommand(
      "compare", "run several methods on one model and report deviations");
  add_common(cmp);
  CLI::App* bench =
      app.add_subcommand("bench", "scaling benchmark on synthetic tensors");
  add_common(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);  // --help and friends
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;  // a bad command line is a config error
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "bench") {
      BenchConfig cfg = load_bench_config(config_path);
      if (sub->count("--seed")) cfg.seed = seed;
      if (sub->count("--out")) cfg.out_dir = out_dir;
      cfg.validate();
      ensure_dir(cfg.out_dir);
      cmd_bench(cfg, cfg.out_dir);
    } else if (name == "compare") {
      CompareConfig cfg = load_compare_config(config_path);
      if (sub->count("--seed")) cfg.seed = seed;
      if (sub->count("--out")) cfg.out_dir = out_dir;
      cfg.validate();
      ensure_dir(cfg.out_dir);
      cmd_compare(cfg, cfg.out_dir);
    } else {
      RunConfig cfg = load_run_config(config_path);
      if (sub->count("--seed")) cfg.seed = seed;
      if (sub->count("--out")) cfg.out_dir = out_dir;
      cfg.validate();
      ensure_dir(cfg.out_dir);
      if (name == "build-pt")
        cmd_build_pt(cfg, cfg.out_dir);
      else if (name == "dynamics")
        cmd_dynamics(cfg, pt_path, cfg.out_dir);
      else
        cmd_optimize(cfg, pt_path, cfg.out_dir);
    }
  } catch (const config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const numerical_error& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  } catch (const io_error& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
