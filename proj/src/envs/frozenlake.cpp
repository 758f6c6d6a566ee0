#include <algorithm>
#include <map>
#include <sstream>

#include "estop/envs.hpp"
#include "estop/mdp_io.hpp"

namespace estop {

namespace {

// Successor cell for a move, clamped at the edges.
StateId move(const FrozenLakeLayout& params, StateId s, ActionId a) {
    int r = s / params.cols();
    int c = s % params.cols();
    switch (a) {
        case kLeft: c = std::max(c - 1, 0); break;
        case kDown: r = std::min(r + 1, params.rows() - 1); break;
        case kRight: c = std::min(c + 1, params.cols() - 1); break;
        case kUp: r = std::max(r - 1, 0); break;
        default: break;
    }
    return static_cast<StateId>(r * params.cols() + c);
}

// Intended action and its two perpendicular neighbours, 1/3 each.
void add_slip(const FrozenLakeLayout& params, StateId s, ActionId a, double weight, std::map<StateId, double>& out) {
    for (int k : {-1, 0, 1}) {
        const ActionId actual = static_cast<ActionId>((a + k + 4) % 4);
        out[move(params, s, actual)] += weight / 3.0;
    }
}

void validate(const FrozenLakeLayout& params) {
    if (params.grid.empty() || params.cols() == 0) throw Error("FrozenLake map is empty");
    int starts = 0;
    int goals = 0;
    for (std::size_t r = 0; r < params.grid.size(); ++r) {
        if (static_cast<int>(params.grid[r].size()) != params.cols()) {
            throw Error("FrozenLake map row " + std::to_string(r + 1) + " has a different width");
        }
        for (char ch : params.grid[r]) {
            switch (ch) {
                case 'S': ++starts; break;
                case 'G': ++goals; break;
                case 'F':
                case 'H': break;
                default:
                    throw Error(std::string("FrozenLake map row ") + std::to_string(r + 1) +
                                ": unexpected character '" + ch + "'");
            }
        }
    }
    if (starts != 1) throw Error("FrozenLake map needs exactly one 'S'");
    if (goals < 1) throw Error("FrozenLake map needs at least one 'G'");
    if (!(params.hole_escape_prob >= 0.0 && params.hole_escape_prob <= 1.0)) {
        throw Error("hole_escape_prob must lie in [0,1]");
    }
}

}  // namespace

FrozenLakeLayout parse_frozenlake_map(std::string_view text) {
    FrozenLakeLayout params;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        line.erase(std::remove_if(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r'; }),
                   line.end());
        if (!line.empty()) params.grid.push_back(line);
    }
    validate(params);
    return params;
}

FrozenLakeLayout load_frozenlake_map(const std::string& path) { return parse_frozenlake_map(read_text_file(path)); }

std::string frozenlake_map_text(const FrozenLakeLayout& params) {
    std::string out;
    for (const auto& row : params.grid) out += row + "\n";
    return out;
}

FrozenLakeLayout classic_frozenlake_4x4() {
    FrozenLakeLayout params;
    params.grid = {"SFFF", "FHFH", "FFFH", "HFFG"};
    params.horizon = 100;
    return params;
}

FrozenLakeLayout classic_frozenlake_8x8() {
    FrozenLakeLayout params;
    params.grid = {"SFFFFFFF", "FFFFFFFF", "FFFHFFFF", "FFFFFHFF",
                 "FFFHFFFF", "FHHFFFHF", "FHFFHFHF", "FFFHFFFG"};
    params.horizon = 200;
    return params;
}

TabularMdp build_frozenlake(const FrozenLakeLayout& params) {
    validate(params);
    const int S = params.rows() * params.cols();
    const int A = 4;
    std::vector<std::vector<Transition>> rows(static_cast<std::size_t>(S * A));
    std::vector<double> rho0(static_cast<std::size_t>(S), 0.0);
    std::vector<StateId> terminals;

    for (StateId s = 0; s < S; ++s) {
        const char cell = params.cell(s);
        if (cell == 'S') rho0[static_cast<std::size_t>(s)] = 1.0;
        if (cell == 'G' && params.goal_terminal) terminals.push_back(s);
        for (ActionId a = 0; a < A; ++a) {
            std::map<StateId, double> succ;
            if (cell == 'G') {
                succ[s] = 1.0;
            } else if (cell == 'H') {
                succ[s] += 1.0 - params.hole_escape_prob;
                if (params.hole_escape_prob > 0.0) add_slip(params, s, a, params.hole_escape_prob, succ);
            } else {
                add_slip(params, s, a, 1.0, succ);
            }
            auto& row = rows[static_cast<std::size_t>(s * A + a)];
            for (const auto& [next, p] : succ) {
                if (p <= 0.0) continue;
                const double reward = (cell != 'G' && params.cell(next) == 'G') ? 1.0 : 0.0;
                row.push_back(Transition{next, p, reward});
            }
        }
    }
    return TabularMdp(S, A, params.horizon, std::move(rho0), std::move(rows), std::move(terminals));
}

}  // namespace estop
