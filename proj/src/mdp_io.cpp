#include "estop/mdp_io.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace estop {

using nlohmann::json;

namespace {

int line_of_offset(std::string_view text, std::size_t offset) {
    int line = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
        if (text[i] == '\n') ++line;
    }
    return line;
}

// Line of each object inside the top-level "transitions" array, in order.
// A small structural scan; the document has already parsed successfully.
std::vector<int> transition_entry_lines(std::string_view text) {
    std::vector<int> lines;
    std::vector<char> stack;
    std::string last_key;
    std::string current_string;
    bool in_string = false;
    bool escape = false;
    bool transitions_open = false;
    std::size_t transitions_depth = 0;
    int line = 1;
    for (char c : text) {
        if (c == '\n') ++line;
        if (in_string) {
            if (escape) {
                escape = false;
            } else if (c == '\\') {
                escape = true;
            } else if (c == '"') {
                in_string = false;
            } else {
                current_string.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                in_string = true;
                current_string.clear();
                break;
            case ':':
                if (stack.size() == 1) last_key = current_string;
                break;
            case '[':
                stack.push_back('[');
                if (stack.size() == 2 && last_key == "transitions") {
                    transitions_open = true;
                    transitions_depth = stack.size();
                }
                break;
            case '{':
                if (transitions_open && stack.size() == transitions_depth) lines.push_back(line);
                stack.push_back('{');
                break;
            case ']':
                if (transitions_open && stack.size() == transitions_depth) transitions_open = false;
                if (!stack.empty()) stack.pop_back();
                break;
            case '}':
                if (!stack.empty()) stack.pop_back();
                break;
            default:
                break;
        }
    }
    return lines;
}

template <typename T>
T require(const json& doc, const char* key, int line) {
    if (!doc.contains(key)) throw FormatError(std::string("missing field '") + key + "'", line);
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("field '") + key + "': " + e.what(), line);
    }
}

}  // namespace

json mdp_to_json(const TabularMdp& mdp) {
    json doc;
    doc["n_states"] = mdp.n_states();
    doc["n_actions"] = mdp.n_actions();
    doc["horizon"] = mdp.horizon();
    doc["rho0"] = std::vector<double>(mdp.rho0().begin(), mdp.rho0().end());
    doc["terminals"] = std::vector<StateId>(mdp.terminals().begin(), mdp.terminals().end());
    json transitions = json::array();
    for (StateId s = 0; s < mdp.n_states(); ++s) {
        for (ActionId a = 0; a < mdp.n_actions(); ++a) {
            for (const Transition& tr : mdp.row(s, a)) {
                transitions.push_back({{"s", s}, {"a", a}, {"s2", tr.next}, {"p", tr.prob}, {"r", tr.reward}});
            }
        }
    }
    doc["transitions"] = std::move(transitions);
    return doc;
}

std::string mdp_to_text(const TabularMdp& mdp) {
    json doc = mdp_to_json(mdp);
    std::ostringstream os;
    os << "{\n";
    os << "  \"n_states\": " << doc["n_states"].dump() << ",\n";
    os << "  \"n_actions\": " << doc["n_actions"].dump() << ",\n";
    os << "  \"horizon\": " << doc["horizon"].dump() << ",\n";
    os << "  \"rho0\": " << doc["rho0"].dump() << ",\n";
    os << "  \"terminals\": " << doc["terminals"].dump() << ",\n";
    os << "  \"transitions\": [\n";
    const auto& tr = doc["transitions"];
    for (std::size_t i = 0; i < tr.size(); ++i) {
        os << "    " << tr[i].dump() << (i + 1 < tr.size() ? ",\n" : "\n");
    }
    os << "  ]\n}\n";
    return os.str();
}

TabularMdp mdp_from_text(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("malformed document: ") + e.what(), line_of_offset(text, e.byte));
    }
    if (!doc.is_object()) throw FormatError("MDP document must be an object", 1);

    const int n_states = require<int>(doc, "n_states", 0);
    const int n_actions = require<int>(doc, "n_actions", 0);
    const int horizon = require<int>(doc, "horizon", 0);
    if (n_states <= 0 || n_actions <= 0 || horizon <= 0) {
        throw FormatError("n_states, n_actions and horizon must be positive", 0);
    }
    auto rho0 = require<std::vector<double>>(doc, "rho0", 0);
    auto terminals = doc.contains("terminals") ? require<std::vector<StateId>>(doc, "terminals", 0)
                                               : std::vector<StateId>{};
    if (!doc.contains("transitions") || !doc["transitions"].is_array()) {
        throw FormatError("missing array 'transitions'", 0);
    }

    const auto lines = transition_entry_lines(text);
    const auto& entries = doc["transitions"];
    auto line_at = [&](std::size_t i) { return i < lines.size() ? lines[i] : 0; };

    const auto A = static_cast<std::size_t>(n_actions);
    std::vector<std::vector<Transition>> rows(static_cast<std::size_t>(n_states) * A);
    std::map<std::size_t, std::size_t> first_entry;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const json& e = entries[i];
        const int line = line_at(i);
        if (!e.is_object()) throw FormatError("transition entry must be an object", line);
        const int s = require<int>(e, "s", line);
        const int a = require<int>(e, "a", line);
        const int s2 = require<int>(e, "s2", line);
        const double p = require<double>(e, "p", line);
        const double r = require<double>(e, "r", line);
        if (s < 0 || s >= n_states || s2 < 0 || s2 >= n_states) throw FormatError("state index out of range", line);
        if (a < 0 || a >= n_actions) throw FormatError("action index out of range", line);
        if (!(p >= 0.0 && p <= 1.0)) throw FormatError("probability outside [0,1]", line);
        if (!(r >= 0.0 && r <= 1.0)) throw FormatError("reward outside [0,1]", line);
        const std::size_t row = static_cast<std::size_t>(s) * A + static_cast<std::size_t>(a);
        first_entry.emplace(row, i);
        rows[row].push_back(Transition{s2, p, r});
    }
    for (std::size_t row = 0; row < rows.size(); ++row) {
        double sum = 0.0;
        for (const Transition& tr : rows[row]) sum += tr.prob;
        if (std::fabs(sum - 1.0) > 1e-12) {
            std::ostringstream os;
            os << "row (s=" << row / A << ", a=" << row % A << ") sums to " << sum;
            const auto it = first_entry.find(row);
            throw FormatError(os.str(), it == first_entry.end() ? 0 : line_at(it->second));
        }
    }
    try {
        return TabularMdp(n_states, n_actions, horizon, std::move(rho0), std::move(rows), std::move(terminals));
    } catch (const FormatError&) {
        throw;
    } catch (const Error& e) {
        throw FormatError(e.what(), 0);
    }
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

TabularMdp load_mdp(const std::filesystem::path& path) { return mdp_from_text(read_text_file(path)); }

void save_mdp(const TabularMdp& mdp, const std::filesystem::path& path) { write_text_file(path, mdp_to_text(mdp)); }

json policy_to_json(const TabularPolicy& policy) {
    json doc;
    doc["mode"] = policy.mode() == TabularPolicy::Mode::Stationary ? "stationary" : "time_dependent";
    doc["n_states"] = policy.n_states();
    doc["n_actions"] = policy.n_actions();
    doc["n_steps"] = policy.n_steps();
    json probs = json::array();
    for (int t = 0; t < policy.n_steps(); ++t) {
        for (StateId s = 0; s < policy.n_states(); ++s) {
            const auto row = policy.action_probs(t, s);
            probs.push_back(std::vector<double>(row.begin(), row.end()));
        }
    }
    doc["probs"] = std::move(probs);
    return doc;
}

TabularPolicy policy_from_json(const json& doc) {
    const auto mode_name = require<std::string>(doc, "mode", 0);
    TabularPolicy::Mode mode;
    if (mode_name == "stationary") {
        mode = TabularPolicy::Mode::Stationary;
    } else if (mode_name == "time_dependent") {
        mode = TabularPolicy::Mode::TimeDependent;
    } else {
        throw FormatError("unknown policy mode '" + mode_name + "'", 0);
    }
    const int S = require<int>(doc, "n_states", 0);
    const int A = require<int>(doc, "n_actions", 0);
    const int T = doc.contains("n_steps") ? require<int>(doc, "n_steps", 0) : 1;
    const auto rows = require<std::vector<std::vector<double>>>(doc, "probs", 0);
    std::vector<double> flat;
    flat.reserve(rows.size() * static_cast<std::size_t>(std::max(A, 0)));
    for (const auto& r : rows) {
        if (r.size() != static_cast<std::size_t>(A)) throw FormatError("policy row has wrong action count", 0);
        flat.insert(flat.end(), r.begin(), r.end());
    }
    try {
        return TabularPolicy(mode, S, A, T, std::move(flat));
    } catch (const Error& e) {
        throw FormatError(e.what(), 0);
    }
}

TabularPolicy load_policy(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    try {
        return policy_from_json(json::parse(text));
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("malformed policy document: ") + e.what(), line_of_offset(text, e.byte));
    }
}

void save_policy(const TabularPolicy& policy, const std::filesystem::path& path) {
    write_text_file(path, policy_to_json(policy).dump() + "\n");
}

}  // namespace estop
