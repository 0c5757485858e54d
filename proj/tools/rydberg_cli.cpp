#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "rydberg/cli.hpp"

namespace cli = rydberg::cli;

int main(int argc, char** argv) {
    CLI::App app{"Line shapes of dipole-coupled Rydberg gases"};
    app.set_version_flag("--version", std::string(cli::kVersion));
    app.require_subcommand(1);

    struct Entry {
        cli::Subcommand subcommand;
        CLI::App* app;
        std::string config_file;
        std::map<std::string, std::string> flags;
    };
    std::vector<Entry> entries;
    entries.reserve(cli::all_subcommands().size());

    for (cli::Subcommand s : cli::all_subcommands()) {
        entries.push_back({s, nullptr, {}, {}});
        Entry& e = entries.back();
        e.app = app.add_subcommand(std::string(cli::to_string(s)));
        e.app->add_option("--config", e.config_file, "key = value file; flags override its entries")
            ->check(CLI::ExistingFile);
        for (const auto& key : cli::known_keys()) e.app->add_option("--" + key, e.flags[key]);
    }

    CLI11_PARSE(app, argc, argv);

    for (Entry& e : entries) {
        if (!e.app->parsed()) continue;
        cli::KeyValues kv;
        try {
            if (!e.config_file.empty()) kv = cli::read_config_file(e.config_file);
        } catch (const std::exception& ex) {
            std::cerr << ex.what() << "\n";
            return cli::kInvalidConfig;
        }
        for (const auto& key : cli::known_keys())
            if (e.app->count("--" + key) > 0) kv[key] = e.flags[key];
        const cli::RunConfig config = cli::RunConfig::from_key_values(e.subcommand, kv);
        return cli::run(config, std::cerr);
    }
    return cli::kInvalidConfig;
}
