#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "estop/mdp.hpp"

namespace estop {

/// Malformed MDP/policy document. `line()` is 1-based, 0 when unknown.
class FormatError : public Error {
public:
    FormatError(const std::string& what, int line) : Error(what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

// MDP document:
//   {"n_states": N, "n_actions": A, "horizon": H, "rho0": [...], "terminals": [...],
//    "transitions": [{"s": 0, "a": 1, "s2": 3, "p": 0.25, "r": 0.0}, ...]}
nlohmann::json mdp_to_json(const TabularMdp& mdp);
/// Writes one transition per line so diagnostics can point at a line.
std::string mdp_to_text(const TabularMdp& mdp);
/// Parses and validates; errors carry the offending line.
TabularMdp mdp_from_text(std::string_view text);
TabularMdp load_mdp(const std::filesystem::path& path);
void save_mdp(const TabularMdp& mdp, const std::filesystem::path& path);

// Policy document:
//   {"mode": "stationary"|"time_dependent", "n_states": N, "n_actions": A,
//    "n_steps": T, "probs": [[p(a|s) ...] per (t, s) row]}
nlohmann::json policy_to_json(const TabularPolicy& policy);
TabularPolicy policy_from_json(const nlohmann::json& doc);
TabularPolicy load_policy(const std::filesystem::path& path);
void save_policy(const TabularPolicy& policy, const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace estop
