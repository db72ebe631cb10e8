// hmac: collect | train | fly | report

#include "hmac/experiment.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>

namespace {

using hmac::experiment::CommandResult;
using hmac::experiment::ExperimentConfig;

void emit_error(const std::string& command, const std::string& kind, const std::string& message) {
  nlohmann::ordered_json j;
  j["level"] = "error";
  j["command"] = command;
  j["kind"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << std::endl;
}

void emit_result(const std::string& command, const std::string& out_root, const CommandResult& r) {
  for (const auto& w : r.warnings) {
    nlohmann::ordered_json j;
    j["level"] = "warning";
    j["command"] = command;
    j["message"] = w;
    std::cerr << j.dump() << std::endl;
  }
  nlohmann::ordered_json j;
  j["command"] = command;
  j["status"] = "ok";
  j["output_root"] = out_root;
  j["written"] = r.written;
  std::cout << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical meta-learned adaptive control experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::vector<std::uint64_t> seeds;
  for (const char* name : {"collect", "train", "fly", "report"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out_dir, "output root");
    sub->add_option("--seed", seeds, "seed list, e.g. 1,2,3")->delimiter(',');
  }

  std::string command = "hmac";
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    for (auto* sub : app.get_subcommands()) command = sub->get_name();
    emit_error(command, "usage", e.what());
    return 2;
  }
  command = app.get_subcommands().front()->get_name();

  try {
    ExperimentConfig cfg = hmac::experiment::load_config(config_path);
    if (!seeds.empty()) cfg.seeds = seeds;
    const std::string root = hmac::experiment::resolve_output_root(cfg, out_dir);
    CommandResult r;
    if (command == "collect") {
      r = hmac::experiment::cmd_collect(cfg, root);
    } else if (command == "train") {
      r = hmac::experiment::cmd_train(cfg, root);
    } else if (command == "fly") {
      r = hmac::experiment::cmd_fly(cfg, root);
    } else {
      cfg.validate();
      r = hmac::experiment::cmd_report(root);
    }
    emit_result(command, root, r);
    return 0;
  } catch (const hmac::experiment::ConfigError& e) {
    emit_error(command, "config", e.what());
    return 2;
  } catch (const hmac::ParseError& e) {
    emit_error(command, "parse", e.what());
    return 3;
  } catch (const hmac::NumericalError& e) {
    emit_error(command, "numerical", e.what());
    return 4;
  } catch (const std::exception& e) {
    emit_error(command, "runtime", e.what());
    return 1;
  }
}
