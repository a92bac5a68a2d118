#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

namespace lstmkd {

/// Runs one `lstmkd` subcommand. Returns 0 on success, 2 for usage errors
/// (usage text on `err`) and 1 for failed preconditions, reported as a single
/// `error: <code>: <message>` line on `err`.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

/// Output-directory bookkeeping shared by every artifact-producing subcommand:
/// `config.json` (resolved configuration, written before any work starts) and
/// `manifest.json` (SHA-256 of every input and output file).
class RunDirectory {
public:
    RunDirectory(std::string path, std::string command);

    const std::string &path() const { return path_; }
    std::string file(const std::string &name) const;

    void write_config(const nlohmann::json &config) const;
    void add_input(const std::string &role, const std::string &path);
    void add_output(const std::string &name);
    /// Hashes everything registered so far and writes manifest.json.
    void write_manifest() const;

private:
    std::string path_;
    std::string command_;
    std::map<std::string, std::string> inputs_; // role -> path
    std::vector<std::string> outputs_;          // names relative to path_
};

} // namespace lstmkd
