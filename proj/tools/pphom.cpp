// Command-line front end: pphom <command> --config <path> [--out <dir>] [--quiet]

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "pphom/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Homogenization suite for pseudo-parabolic systems with drift"};
    std::string command;
    std::string config;
    pphom::HarnessOptions opt;
    app.add_option("command", command, "check | cell | micro | macro | converge | residual")
        ->required()
        ->check(CLI::IsMember({"check", "cell", "micro", "macro", "converge", "residual"}));
    app.add_option("--config", config, "run configuration file")->required();
    app.add_option("--out", opt.out_dir, "output directory (overrides [output] dir)");
    app.add_flag("--quiet", opt.quiet, "suppress progress messages");
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return pphom::exit_code::usage;
    }

    pphom::RunConfig cfg;
    try {
        cfg = pphom::parse_config(config);
    } catch (const pphom::ConfigError& e) {
        std::cerr << "configuration error in '" << config << "':\n";
        for (const auto& v : e.violations()) std::cerr << "  " << v << '\n';
        return pphom::exit_code_for(e);
    }
    return pphom::run_command(pphom::parse_command(command), cfg, opt);
}
