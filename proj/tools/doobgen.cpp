#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

#include "doobgen/cli.hpp"

namespace {

struct CommandArgs {
  std::string config_file;
  std::map<std::string, std::string> overrides;
  std::map<std::string, CLI::Option*> options;
};

}  // namespace

int main(int argc, char** argv) {
  using namespace doobgen;
  CLI::App app{"Function-space diffusion generative models with Doob h-transform steering"};
  app.set_version_flag("--version", std::string(version_string));
  app.require_subcommand(1);

  const std::map<std::string, std::string> descriptions = {
      {"simulate", "draw target samples, forward paths or bridge paths"},
      {"train", "fit the score network and write a checkpoint"},
      {"generate", "sample with analytic or network steering"},
      {"evaluate", "compare samples to the target"},
      {"sweep", "train, generate and evaluate over a parameter grid"},
  };
  std::map<std::string, CommandArgs> args;
  for (const auto& name : command_names()) {
    auto* sub = app.add_subcommand(name, descriptions.at(name));
    auto& a = args[name];
    sub->add_option("--config", a.config_file, "key=value config file; command-line keys override it");
    for (const auto& key : config_keys()) {
      a.options[key.name] =
          sub->add_option(std::string("--") + key.name, a.overrides[key.name], key.help)->default_str(key.default_value);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const auto* sub = app.get_subcommands().front();
  const auto& a = args.at(sub->get_name());
  try {
    RunConfig cfg;
    if (!a.config_file.empty()) cfg.load_file(a.config_file);
    for (const auto& [key, opt] : a.options) {
      if (opt->count() > 0) cfg.set(key, a.overrides.at(key));
    }
    run_command(sub->get_name(), cfg);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
