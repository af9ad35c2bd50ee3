#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "liqlsmc/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Liquidity-aware dynamic portfolio allocation by least squares Monte Carlo"};
    std::string command;
    std::string config;
    std::vector<std::string> overrides;
    bool dry_run = false;

    std::string names;
    for (const auto& c : liqlsmc::commands()) names += (names.empty() ? "" : "|") + c;
    app.add_option("command", command, names)->required()->check(CLI::IsMember(liqlsmc::commands()));
    app.add_option("-c,--config", config, "flat key = value config file");
    app.add_option("overrides", overrides, "key=value overrides, applied after the file");
    app.add_flag("--dry-run", dry_run, "validate and print the resolved config without computing");
    app.footer("Run with --keys to list every config key.");
    bool list_keys = false;
    app.add_flag("--keys", list_keys, "list config keys and exit");

    if (argc > 1 && std::string(argv[1]) == "--keys") {
        for (const auto& k : liqlsmc::config_schema())
            std::cout << k.name << (k.required ? " (required)" : " = " + k.default_value) << "  # " << k.doc << '\n';
        return 0;
    }
    CLI11_PARSE(app, argc, argv);
    return liqlsmc::run(command, config, overrides, dry_run, std::cout, std::cerr);
}
