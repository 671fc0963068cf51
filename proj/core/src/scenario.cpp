#include "hjblab/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "hjblab/error.hpp"
#include "hjblab/hash.hpp"
#include "text_format.hpp"

namespace hjblab {

namespace {

struct RawValue {
    std::string text;
    std::size_t line = 0;
    std::size_t col = 0;  ///< 1-based column of the first value character
};

using Section = std::map<std::string, RawValue, std::less<>>;

/// A scalar or a bracketed list, with the column where it starts.
struct Item {
    bool list = false;
    std::string text;
    std::vector<Item> items;
    std::size_t col = 0;
};

class Loader {
public:
    explicit Loader(std::string origin) : origin_(std::move(origin)) {}

    [[noreturn]] void fail(std::size_t line, std::size_t col, const std::string& msg) const {
        throw InputError(origin_ + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + msg);
    }

    std::map<std::string, Section, std::less<>> read(const std::string& text) {
        std::map<std::string, Section, std::less<>> out;
        std::istringstream in(text);
        std::string line;
        std::string current;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto first = line.find_first_not_of(" \t");
            if (first == std::string::npos) continue;
            const auto last = line.find_last_not_of(" \t");
            if (line[first] == '[') {
                if (line[last] != ']') fail(lineno, first + 1, "unterminated section header");
                current = line.substr(first + 1, last - first - 1);
                static const char* known[] = {"problem", "constants", "grid", "mc", "penalty", "regularity", "output"};
                if (std::find(std::begin(known), std::end(known), current) == std::end(known)) {
                    fail(lineno, first + 2, "unknown section '" + current + "'");
                }
                if (out.count(current)) fail(lineno, first + 1, "duplicate section '" + current + "'");
                out[current];
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) fail(lineno, first + 1, "expected 'key = value'");
            if (current.empty()) fail(lineno, first + 1, "key outside of any section");
            std::string key = line.substr(first, eq - first);
            key.erase(key.find_last_not_of(" \t") + 1);
            const auto vstart = line.find_first_not_of(" \t", eq + 1);
            if (key.empty()) fail(lineno, first + 1, "missing key");
            if (vstart == std::string::npos || vstart > last) fail(lineno, eq + 2, "missing value for '" + key + "'");
            auto& sec = out[current];
            if (sec.count(key)) fail(lineno, first + 1, "duplicate key '" + key + "'");
            sec[key] = RawValue{line.substr(vstart, last - vstart + 1), lineno, vstart + 1};
        }
        return out;
    }

    Item items(const RawValue& v) const { return parse_item(v, v.text, 0, v.text.size()); }

    double number(const RawValue& v, const std::string& field) const {
        try {
            return detail::parse_double(v.text, field);
        } catch (const InputError& e) {
            fail(v.line, v.col, "field '" + field + "': expected a number, got '" + v.text + "'");
        }
    }

    double number(const RawValue& v, const Item& it, const std::string& field) const {
        if (it.list) fail(v.line, it.col, "field '" + field + "': expected a number, got a list");
        try {
            return detail::parse_double(it.text, field);
        } catch (const InputError&) {
            fail(v.line, it.col, "field '" + field + "': expected a number, got '" + it.text + "'");
        }
    }

    std::size_t count(const RawValue& v, const std::string& field) const {
        try {
            return detail::parse_size(v.text, field);
        } catch (const InputError&) {
            fail(v.line, v.col, "field '" + field + "': expected a nonnegative integer, got '" + v.text + "'");
        }
    }

    std::vector<double> numbers(const RawValue& v, const std::string& field) const {
        const Item it = items(v);
        std::vector<double> out;
        if (!it.list) {
            out.push_back(number(v, it, field));
            return out;
        }
        for (const auto& c : it.items) out.push_back(number(v, c, field));
        return out;
    }

private:
    Item parse_item(const RawValue& v, const std::string& s, std::size_t b, std::size_t e) const {
        while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
        while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
        Item it;
        it.col = v.col + b;
        if (b == e) fail(v.line, it.col, "empty list entry");
        if (s[b] != '[') {
            it.text = s.substr(b, e - b);
            return it;
        }
        if (s[e - 1] != ']') fail(v.line, v.col + e - 1, "list is missing its closing ']'");
        it.list = true;
        int depth = 0;
        std::size_t start = b + 1;
        for (std::size_t i = b + 1; i < e - 1; ++i) {
            const char c = s[i];
            if (c == '(' || c == '[') ++depth;
            if (c == ')' || c == ']') {
                if (--depth < 0) fail(v.line, v.col + i, "unbalanced brackets");
            }
            if (c == ',' && depth == 0) {
                it.items.push_back(parse_item(v, s, start, i));
                start = i + 1;
            }
        }
        if (depth != 0) fail(v.line, v.col + e - 1, "unbalanced brackets");
        std::size_t rest = start;
        while (rest < e - 1 && (s[rest] == ' ' || s[rest] == '\t')) ++rest;
        if (rest < e - 1) {
            it.items.push_back(parse_item(v, s, start, e - 1));
        } else if (!it.items.empty()) {
            fail(v.line, v.col + e - 1, "trailing comma in list");
        }
        return it;
    }

    std::string origin_;
};

RegressionBasis parse_basis(const Loader& L, const RawValue& v) {
    const std::string& t = v.text;
    const auto colon = t.find(':');
    const std::string kind = t.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : t.substr(colon + 1);
    try {
        if (kind == "cells") return RegressionBasis::cells(arg.empty() ? 0 : detail::parse_size(arg, "basis"));
        if (kind == "poly") return RegressionBasis::polynomial(arg.empty() ? 2 : static_cast<int>(detail::parse_size(arg, "basis")));
    } catch (const InputError&) {
    }
    L.fail(v.line, v.col, "field 'basis': expected cells[:N] or poly[:q], got '" + t + "'");
}

std::string join_numbers(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += detail::format_double(v[i]);
    }
    return s;
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& origin) {
    Loader L(origin);
    auto sections = L.read(text);
    if (!sections.count("problem")) throw InputError(origin + ": missing [problem] section");

    auto check_keys = [&](const std::string& name, std::initializer_list<const char*> allowed) {
        auto it = sections.find(name);
        if (it == sections.end()) return;
        for (const auto& [key, v] : it->second) {
            bool ok = false;
            for (const char* a : allowed) ok = ok || key == a;
            if (!ok) L.fail(v.line, v.col, "unknown key '" + key + "' in [" + name + "]");
        }
    };
    check_keys("problem", {"d", "m", "T", "b", "sigma", "f", "Phi", "phi", "side", "controls"});
    check_keys("grid", {"lo", "hi", "nodes", "nt", "scheme", "store_every"});
    check_keys("mc", {"paths", "steps", "seed", "basis", "t0", "x0"});
    check_keys("penalty", {"ladder"});
    check_keys("regularity", {"deltas", "window_lo", "window_hi"});
    check_keys("output", {"dir"});

    const Section& P = sections["problem"];
    auto find = [](const Section& s, const char* key) -> const RawValue* {
        auto it = s.find(key);
        return it == s.end() ? nullptr : &it->second;
    };
    auto require = [&](const Section& s, const char* key, const char* section) -> const RawValue& {
        const RawValue* v = find(s, key);
        if (!v) throw InputError(origin + ": missing field '" + std::string(key) + "' in [" + section + "]");
        return *v;
    };

    ProblemSpec spec;
    if (auto v = find(P, "d")) spec.state_dim = L.count(*v, "d");
    if (auto v = find(P, "m")) spec.noise_dim = L.count(*v, "m");
    if (spec.state_dim < 1) L.fail(find(P, "d")->line, find(P, "d")->col, "field 'd' must be at least 1");
    if (spec.noise_dim < 1) L.fail(find(P, "m")->line, find(P, "m")->col, "field 'm' must be at least 1");
    spec.horizon = L.number(require(P, "T", "problem"), "T");

    if (sections.count("constants")) {
        for (const auto& [key, v] : sections["constants"]) spec.constants[key] = L.number(v, key);
    }

    if (auto v = find(P, "controls")) {
        const Item it = L.items(*v);
        spec.controls.clear();
        if (!it.list) {
            spec.controls.push_back({L.number(*v, it, "controls")});
        } else {
            for (const auto& c : it.items) {
                if (c.list) {
                    std::vector<double> pt;
                    for (const auto& e : c.items) pt.push_back(L.number(*v, e, "controls"));
                    spec.controls.push_back(std::move(pt));
                } else {
                    spec.controls.push_back({L.number(*v, c, "controls")});
                }
            }
        }
        if (spec.controls.empty()) L.fail(v->line, v->col, "field 'controls' must be nonempty");
    }
    const std::size_t k = spec.controls.front().size();

    ExprContext ctx{spec.state_dim, spec.noise_dim, k, spec.constants};
    auto check_expr = [&](const RawValue& v, const Item& it, const std::string& field) {
        if (it.list) L.fail(v.line, it.col, "field '" + field + "': expected an expression, got a list");
        try {
            (void)Expr::parse(it.text, ctx);
        } catch (const ParseError& e) {
            std::string msg = e.what();
            const auto cut = msg.rfind(" (at byte");
            if (cut != std::string::npos) msg.erase(cut);
            L.fail(v.line, it.col + e.offset(), "field '" + field + "': " + msg);
        } catch (const Error& e) {
            L.fail(v.line, it.col, "field '" + field + "': " + e.what());
        }
        return it.text;
    };
    auto scalar_expr = [&](const char* key, const char* fallback) -> std::string {
        const RawValue* v = find(P, key);
        if (!v) return fallback;
        return check_expr(*v, L.items(*v), key);
    };

    if (auto v = find(P, "b")) {
        const Item it = L.items(*v);
        spec.drift.clear();
        if (!it.list) {
            spec.drift.push_back(check_expr(*v, it, "b"));
        } else {
            for (const auto& c : it.items) spec.drift.push_back(check_expr(*v, c, "b"));
        }
        if (spec.drift.size() != spec.state_dim) {
            L.fail(v->line, v->col,
                   "field 'b' must have " + std::to_string(spec.state_dim) + " component(s), got " +
                       std::to_string(spec.drift.size()));
        }
    } else {
        spec.drift.assign(spec.state_dim, "0");
    }

    {
        const RawValue& v = require(P, "sigma", "problem");
        const Item it = L.items(v);
        const std::size_t d = spec.state_dim;
        const std::size_t m = spec.noise_dim;
        auto shape_error = [&](const std::string& got) {
            L.fail(v.line, v.col,
                   "field 'sigma' must be a " + std::to_string(d) + "x" + std::to_string(m) + " matrix, got " + got);
        };
        if (!it.list) {
            if (d * m != 1) shape_error("a scalar");
            spec.diffusion.push_back(check_expr(v, it, "sigma"));
        } else if (std::all_of(it.items.begin(), it.items.end(), [](const Item& c) { return c.list; })) {
            if (it.items.size() != d) shape_error(std::to_string(it.items.size()) + " row(s)");
            for (const auto& row : it.items) {
                if (row.items.size() != m) shape_error("a row with " + std::to_string(row.items.size()) + " entries");
                for (const auto& c : row.items) spec.diffusion.push_back(check_expr(v, c, "sigma"));
            }
        } else if (std::none_of(it.items.begin(), it.items.end(), [](const Item& c) { return c.list; })) {
            if ((d == 1 && it.items.size() == m) || (m == 1 && it.items.size() == d)) {
                for (const auto& c : it.items) spec.diffusion.push_back(check_expr(v, c, "sigma"));
            } else {
                shape_error("a flat list of " + std::to_string(it.items.size()) + " entries");
            }
        } else {
            shape_error("a ragged list");
        }
    }
    spec.driver = scalar_expr("f", "0");
    spec.terminal = check_expr(require(P, "Phi", "problem"), L.items(require(P, "Phi", "problem")), "Phi");
    if (auto v = find(P, "phi")) {
        spec.obstacle = v->text == "none" ? std::string("none") : check_expr(*v, L.items(*v), "phi");
    }
    if (auto v = find(P, "side")) {
        try {
            spec.side = parse_obstacle_side(v->text);
        } catch (const InputError& e) {
            L.fail(v->line, v->col, std::string("field 'side': ") + e.what());
        }
    }

    std::optional<ControlProblem> prob;
    try {
        prob.emplace(ControlProblem::from_spec(spec));
    } catch (const Error& e) {
        throw InputError(origin + ": " + e.what());
    }

    Scenario s{origin, spec, *prob, {}, {}, 0.0, {}, {}, {}, {}, ".", 0};

    if (sections.count("grid")) {
        const Section& G = sections["grid"];
        GridSpec g;
        const RawValue& lo = require(G, "lo", "grid");
        const RawValue& hi = require(G, "hi", "grid");
        const RawValue& nodes = require(G, "nodes", "grid");
        g.box.lo = L.numbers(lo, "lo");
        g.box.hi = L.numbers(hi, "hi");
        for (double n : L.numbers(nodes, "nodes")) {
            if (!(n >= 0) || n != std::floor(n)) L.fail(nodes.line, nodes.col, "field 'nodes' must hold integers");
            g.nodes.push_back(static_cast<std::size_t>(n));
        }
        const std::size_t d = spec.state_dim;
        if (g.box.lo.size() != d) L.fail(lo.line, lo.col, "field 'lo' must have " + std::to_string(d) + " entries");
        if (g.box.hi.size() != d) L.fail(hi.line, hi.col, "field 'hi' must have " + std::to_string(d) + " entries");
        if (g.nodes.size() != d) L.fail(nodes.line, nodes.col, "field 'nodes' must have " + std::to_string(d) + " entries");
        for (std::size_t i = 0; i < d; ++i) {
            if (!(g.box.lo[i] < g.box.hi[i])) L.fail(lo.line, lo.col, "field 'lo' must be below 'hi'");
            if (g.nodes[i] < 3) L.fail(nodes.line, nodes.col, "field 'nodes' needs at least 3 per dimension");
        }
        if (auto v = find(G, "nt")) g.nt = v->text == "auto" ? 0 : L.count(*v, "nt");
        if (auto v = find(G, "scheme")) {
            try {
                g.scheme = parse_scheme(v->text);
            } catch (const InputError& e) {
                L.fail(v->line, v->col, std::string("field 'scheme': ") + e.what());
            }
        }
        if (auto v = find(G, "store_every")) {
            g.store_every = L.count(*v, "store_every");
            if (g.store_every < 1) L.fail(v->line, v->col, "field 'store_every' must be at least 1");
        }
        s.grid = g;
    }

    s.mc_x0.assign(spec.state_dim, 0.0);
    if (sections.count("mc")) {
        const Section& M = sections["mc"];
        if (auto v = find(M, "paths")) {
            s.mc.n_paths = L.count(*v, "paths");
            if (s.mc.n_paths < 1) L.fail(v->line, v->col, "field 'paths' must be at least 1");
        }
        if (auto v = find(M, "steps")) {
            s.mc.steps = L.count(*v, "steps");
            if (s.mc.steps < 1) L.fail(v->line, v->col, "field 'steps' must be at least 1");
        }
        if (auto v = find(M, "seed")) s.mc.seed = L.count(*v, "seed");
        if (auto v = find(M, "basis")) s.mc.basis = parse_basis(L, *v);
        if (auto v = find(M, "t0")) {
            s.mc_t0 = L.number(*v, "t0");
            if (!(s.mc_t0 >= 0.0 && s.mc_t0 < spec.horizon)) L.fail(v->line, v->col, "field 't0' must lie in [0, T)");
        }
        if (auto v = find(M, "x0")) {
            s.mc_x0 = L.numbers(*v, "x0");
            if (s.mc_x0.size() != spec.state_dim) {
                L.fail(v->line, v->col, "field 'x0' must have " + std::to_string(spec.state_dim) + " entries");
            }
        }
    }

    s.ladder = {1.0};
    if (sections.count("penalty")) {
        if (auto v = find(sections["penalty"], "ladder")) {
            s.ladder = L.numbers(*v, "ladder");
            try {
                PenaltyLadder check(s.ladder);
            } catch (const InputError& e) {
                L.fail(v->line, v->col, std::string("field 'ladder': ") + e.what());
            }
        }
    }

    if (sections.count("regularity")) {
        const Section& R = sections["regularity"];
        if (auto v = find(R, "deltas")) {
            s.deltas = L.numbers(*v, "deltas");
            for (double d : s.deltas) {
                if (!(d > 0.0 && d < spec.horizon)) L.fail(v->line, v->col, "field 'deltas' must lie in (0, T)");
            }
        }
        const RawValue* wl = find(R, "window_lo");
        const RawValue* wh = find(R, "window_hi");
        if ((wl == nullptr) != (wh == nullptr)) {
            throw InputError(origin + ": fields 'window_lo' and 'window_hi' must be given together");
        }
        if (wl) {
            Box w{L.numbers(*wl, "window_lo"), L.numbers(*wh, "window_hi")};
            if (w.lo.size() != spec.state_dim || w.hi.size() != spec.state_dim) {
                L.fail(wl->line, wl->col, "field 'window_lo' must have " + std::to_string(spec.state_dim) + " entries");
            }
            s.window = w;
        }
    }

    if (sections.count("output")) {
        if (auto v = find(sections["output"], "dir")) s.output_dir = v->text;
    }
    s.hash = scenario_hash(s);
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open scenario file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str(), path);
}

std::uint64_t scenario_hash(const Scenario& s) {
    std::string text = s.problem.canonical_text();
    if (s.grid) {
        const GridSpec& g = *s.grid;
        std::string nodes;
        for (std::size_t i = 0; i < g.nodes.size(); ++i) nodes += (i ? "," : "") + std::to_string(g.nodes[i]);
        text += "grid.lo=" + join_numbers(g.box.lo) + "\n";
        text += "grid.hi=" + join_numbers(g.box.hi) + "\n";
        text += "grid.nodes=" + nodes + "\n";
        text += "grid.nt=" + std::to_string(g.nt) + "\n";
        text += "grid.scheme=" + to_string(g.scheme) + "\n";
        text += "grid.store_every=" + std::to_string(g.store_every) + "\n";
    }
    text += "mc.paths=" + std::to_string(s.mc.n_paths) + "\n";
    text += "mc.steps=" + std::to_string(s.mc.steps) + "\n";
    text += "mc.seed=" + std::to_string(s.mc.seed) + "\n";
    text += "mc.basis=" + s.mc.basis.describe() + "\n";
    text += "mc.t0=" + detail::format_double(s.mc_t0) + "\n";
    text += "mc.x0=" + join_numbers(s.mc_x0) + "\n";
    text += "penalty.ladder=" + join_numbers(s.ladder) + "\n";
    text += "regularity.deltas=" + join_numbers(s.deltas) + "\n";
    if (s.window) {
        text += "regularity.window=" + join_numbers(s.window->lo) + ";" + join_numbers(s.window->hi) + "\n";
    }
    return fnv1a64(text);
}

std::string RunManifest::to_json() const {
    nlohmann::ordered_json j;
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(scenario_hash));
    j["scenario_hash"] = hex;
    j["tool_version"] = tool_version;
    j["seed"] = seed;
    j["started"] = started;
    j["wall_seconds"] = wall_seconds;
    nlohmann::ordered_json st = nlohmann::ordered_json::object();
    for (const auto& [name, secs] : stages) st[name] = secs;
    j["stages"] = st;
    return j.dump(2) + "\n";
}

}  // namespace hjblab
