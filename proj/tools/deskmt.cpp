#include <CLI11.hpp>
#include <iostream>

#include "deskmt/cli.hpp"

// deskmt <command> [--config file] [--set key=value ...] [--seed N] [--out-dir dir]

int main(int argc, char** argv) {
  CLI::App app{"desk-scale LM / NMT toolkit with domain-differential fusion"};
  app.require_subcommand(1);

  const std::vector<std::string> commands = {
      "train-lm",  "train-nmt", "train-fusion",        "fine-tune",
      "augment-copy", "augment-backtranslate", "translate", "evaluate",
      "analyze-correlation", "sweep-beta", "grad-check"};

  struct Opts {
    std::string config_path;
    std::vector<std::string> sets;
    std::string seed;
    std::string out_dir;
    bool print_defaults = false;
  };
  std::map<std::string, Opts> opts;

  for (const std::string& name : commands) {
    CLI::App* sub = app.add_subcommand(name);
    Opts& o = opts[name];
    sub->add_option("--config", o.config_path, "key=value config file");
    sub->add_option("--set", o.sets, "override: key=value (repeatable)");
    sub->add_option("--seed", o.seed, "global seed");
    sub->add_option("--out-dir", o.out_dir, "run directory (default: run)");
    sub->add_flag("--print-config", o.print_defaults, "print the resolved config and exit");
  }

  CLI11_PARSE(app, argc, argv);

  std::string command = app.get_subcommands().front()->get_name();
  const Opts& o = opts[command];

  deskmt::cli::ConfigMap cfg;
  try {
    if (!o.config_path.empty()) cfg = deskmt::cli::ConfigMap::from_file(o.config_path);
    for (const std::string& s : o.sets) {
      size_t eq = s.find('=');
      if (eq == std::string::npos) {
        std::cerr << "error: config: --set expects key=value, got '" << s << "'\n";
        return 2;
      }
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (!o.seed.empty()) cfg.set("seed", o.seed);
    if (!o.out_dir.empty()) cfg.set("out_dir", o.out_dir);
  } catch (const deskmt::ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  }

  if (o.print_defaults) {
    std::cout << "command=" << command << "\n" << cfg.resolved_text();
    return 0;
  }
  return deskmt::cli::run_command_line(command, cfg);
}
