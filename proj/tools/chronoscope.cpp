#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "chronoscope/scenario.hpp"

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kPrecondition = 3, kCheck = 4 };

}  // namespace

int main(int argc, char** argv) {
  namespace sc = chronoscope::scenario;
  CLI::App app{"chronoscope: chronocyclic phase-space scenarios"};
  std::string scenario;
  std::string config;
  std::string out = "chronoscope_out";
  std::optional<std::uint64_t> seed;
  bool check = false;
  app.add_option("scenario", scenario, "wigner | pseudo_wigner | spectrogram | hom_map | retrieve | reconstruct | figure3")
      ->required()
      ->check(CLI::IsMember(sc::scenario_names()));
  app.add_option("--config", config, "JSON scenario configuration")->required();
  app.add_option("--out", out, "output directory");
  app.add_option("--seed", seed, "seed override for randomized scenarios");
  app.add_flag("--check", check, "run the scenario's two-path property and fail on violation");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    const auto cfg = sc::load_config(config);
    sc::RunOptions opt;
    opt.out_dir = out;
    opt.seed = seed;
    opt.check = check;
    opt.config_dir = std::filesystem::path(config).parent_path();
    const auto m = sc::run(scenario, cfg, opt);
    std::cout << "wrote " << m.document["files"].size() << " files to " << out << "\n";
    if (check) {
      for (const auto& item : m.document["check"]["items"]) {
        std::printf("%s %s: %.10g (limit %.10g)\n", item["passed"].get<bool>() ? "ok  " : "FAIL",
                    item["name"].get<std::string>().c_str(), item["value"].get<double>(), item["limit"].get<double>());
      }
      if (!m.check_passed) return kCheck;
    }
    return kOk;
  } catch (const chronoscope::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const chronoscope::InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kConfig;
  } catch (const chronoscope::PreconditionError& e) {
    std::cerr << "precondition failed: " << e.what() << "\n";
    return kPrecondition;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
