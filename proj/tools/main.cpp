#include <functional>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "commands.hpp"

using namespace eflab::cli;

int main(int argc, char** argv) {
  CLI::App app{"eflab: edit-flow lab"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides o;
  using Handler = std::function<int(RunConfig const&, unsigned)>;
  std::map<std::string, Handler> const handlers{
      {"gen", cmd_gen},       {"corrupt", cmd_corrupt}, {"oracle", cmd_oracle},
      {"train", cmd_train},   {"sample", cmd_sample},   {"validate-schedule", cmd_validate_schedule},
      {"report", cmd_report},
  };

  for (auto const& [name, _] : handlers) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON run config, or a manifest written by an earlier run")->required();
    sub->add_option("--seed", o.seed);
    sub->add_option("--threads", o.threads)->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--dataset", o.dataset, "dataset lines (overrides the config)");
    if (name == "sample") {
      sub->add_option("--dt", o.dt);
      sub->add_option("--steps-img", o.steps_img);
      sub->add_option("--cfg-w", o.cfg_w);
      sub->add_option("--mode", o.mode);
      sub->add_option("--runs", o.runs);
      sub->add_option("--trace-out", o.trace_out);
      sub->add_option("--model", o.model, "oracle or a checkpoint path");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (CLI::CallForHelp const& e) {
    return app.exit(e);
  } catch (CLI::CallForAllHelp const& e) {
    return app.exit(e);
  } catch (CLI::ParseError const& e) {
    app.exit(e);
    return static_cast<int>(eflab::ErrorClass::config);
  }

  auto const command = app.get_subcommands().front()->get_name();
  try {
    auto cfg = load_config(config_path);
    apply(cfg, o);
    write_manifest(cfg, command, o.threads);
    return handlers.at(command)(cfg, o.threads);
  } catch (eflab::Error const& e) {
    std::cerr << "eflab " << command << ": " << e.what() << '\n';
    return e.exit_code();
  } catch (std::exception const& e) {
    std::cerr << "eflab " << command << ": unexpected error: " << e.what() << '\n';
    return 1;
  }
}
