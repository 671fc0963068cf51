#include "hjblab/field_io.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "hjblab/error.hpp"
#include "text_format.hpp"

namespace hjblab {

namespace {

template <class T, class F>
std::string join(const std::vector<T>& v, F&& fmt) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ' ';
        s += fmt(v[i]);
    }
    return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::vector<std::string_view> words(std::string_view s) {
    std::vector<std::string_view> out;
    for (auto w : split(s, ' ')) {
        if (!w.empty()) out.push_back(w);
    }
    return out;
}

}  // namespace

void write_field_csv(const ValueField& f, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    const SpaceGrid& g = f.space;
    const std::size_t d = g.dims();
    auto num = [](double v) { return detail::format_double(v); };
    auto cnt = [](std::size_t v) { return std::to_string(v); };
    out << "# format=hjblab-field-1\n";
    out << "# dims=" << d << '\n';
    out << "# lo=" << join(g.box().lo, num) << '\n';
    out << "# hi=" << join(g.box().hi, num) << '\n';
    out << "# nodes=" << join(g.shape(), cnt) << '\n';
    out << "# nt=" << f.nt << '\n';
    out << "# horizon=" << num(f.horizon) << '\n';
    out << "# scheme=" << f.scheme << '\n';
    out << "# variant=" << f.variant << '\n';
    out << "# side=" << to_string(f.side) << '\n';
    out << "# penalty=" << num(f.penalty) << '\n';
    out << "# problem_hash=" << f.problem_hash << '\n';
    out << "# slices=" << join(f.time_index, cnt) << '\n';
    out << "t_index";
    for (std::size_t i = 0; i < d; ++i) out << ",x_index_" << i + 1;
    out << ",t";
    for (std::size_t i = 0; i < d; ++i) out << ",x" << i + 1;
    out << ",v,u_index\n";
    std::vector<std::size_t> idx(d);
    std::string line;
    for (std::size_t s = 0; s < f.slices(); ++s) {
        const std::string ts = num(f.time(s));
        for (std::size_t node = 0; node < g.size(); ++node) {
            g.multi(node, idx);
            line = std::to_string(f.time_index[s]);
            for (std::size_t i = 0; i < d; ++i) line += ',' + std::to_string(idx[i]);
            line += ',' + ts;
            for (std::size_t i = 0; i < d; ++i) line += ',' + num(g.coord(i, idx[i]));
            line += ',' + num(f.at(s, node));
            line += ',' + std::to_string(f.controls[s * g.size() + node]);
            line += '\n';
            out << line;
        }
    }
    if (!out) throw InputError("failed writing '" + path + "'");
}

ValueField read_field_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open field file '" + path + "'");
    std::map<std::string, std::string, std::less<>> meta;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.rfind("#", 0) == 0) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw InputError("malformed metadata on line " + std::to_string(lineno));
            std::string key = line.substr(1, eq - 1);
            while (!key.empty() && key.front() == ' ') key.erase(key.begin());
            meta[key] = line.substr(eq + 1);
            continue;
        }
        header_seen = true;
        break;
    }
    auto get = [&](std::string_view key) -> const std::string& {
        auto it = meta.find(key);
        if (it == meta.end()) throw InputError("field file is missing metadata key '" + std::string(key) + "'");
        return it->second;
    };
    if (get("format") != "hjblab-field-1") throw InputError("unsupported field format '" + get("format") + "'");
    const std::size_t d = detail::parse_size(get("dims"), "dims");
    Box box;
    for (auto w : words(get("lo"))) box.lo.push_back(detail::parse_double(w, "lo"));
    for (auto w : words(get("hi"))) box.hi.push_back(detail::parse_double(w, "hi"));
    std::vector<std::size_t> nodes;
    for (auto w : words(get("nodes"))) nodes.push_back(detail::parse_size(w, "nodes"));
    if (d == 0 || box.lo.size() != d || box.hi.size() != d || nodes.size() != d) {
        throw InputError("field metadata 'lo', 'hi' and 'nodes' must list dims entries");
    }
    ValueField f;
    f.space = SpaceGrid(box, nodes);
    f.nt = detail::parse_size(get("nt"), "nt");
    f.horizon = detail::parse_double(get("horizon"), "horizon");
    f.scheme = get("scheme");
    f.variant = get("variant");
    f.side = parse_obstacle_side(get("side"));
    f.penalty = detail::parse_double(get("penalty"), "penalty");
    f.problem_hash = detail::parse_size(get("problem_hash"), "problem_hash");
    for (auto w : words(get("slices"))) f.time_index.push_back(detail::parse_size(w, "slices"));
    if (f.time_index.size() < 2 || f.time_index.front() != 0 || f.time_index.back() != f.nt) {
        throw InputError("field metadata 'slices' must start at 0 and end at nt");
    }
    for (std::size_t s = 1; s < f.time_index.size(); ++s) {
        if (f.time_index[s] <= f.time_index[s - 1]) throw InputError("field metadata 'slices' must increase");
    }
    if (!header_seen) throw InputError("field file has no header row");

    std::map<std::size_t, std::size_t> slice_of;
    for (std::size_t s = 0; s < f.time_index.size(); ++s) slice_of[f.time_index[s]] = s;
    const std::size_t N = f.space.size();
    f.values.assign(f.slices() * N, 0.0);
    f.controls.assign(f.slices() * N, 0);
    std::vector<char> seen(f.slices() * N, 0);
    std::vector<std::size_t> idx(d);
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cols = split(line, ',');
        if (cols.size() != 2 * d + 4) {
            throw InputError("field row on line " + std::to_string(lineno) + " has " + std::to_string(cols.size()) +
                             " columns, expected " + std::to_string(2 * d + 4));
        }
        const std::size_t k = detail::parse_size(cols[0], "t_index");
        auto it = slice_of.find(k);
        if (it == slice_of.end()) {
            throw InputError("field row on line " + std::to_string(lineno) + " uses a t_index not listed in 'slices'");
        }
        for (std::size_t i = 0; i < d; ++i) {
            idx[i] = detail::parse_size(cols[1 + i], "x_index");
            if (idx[i] >= nodes[i]) throw InputError("x_index out of range on line " + std::to_string(lineno));
        }
        const std::size_t pos = it->second * N + f.space.flat(idx);
        if (seen[pos]) throw InputError("duplicate field row on line " + std::to_string(lineno));
        seen[pos] = 1;
        f.values[pos] = detail::parse_double(cols[2 + 2 * d], "v");
        f.controls[pos] = static_cast<std::uint32_t>(detail::parse_size(cols[3 + 2 * d], "u_index"));
        ++rows;
    }
    if (rows != seen.size()) {
        throw InputError("field file holds " + std::to_string(rows) + " rows, metadata promises " +
                         std::to_string(seen.size()));
    }
    return f;
}

}  // namespace hjblab
