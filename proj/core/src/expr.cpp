#include "hjblab/expr.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <optional>

#include "hjblab/error.hpp"

namespace hjblab {

namespace {

enum class Func : std::uint8_t { Abs, Sqrt, Exp, Sin, Cos, Tanh, Min, Max, Pos, NegPart, Clamp };

struct FuncInfo {
    std::string_view name;
    Func func;
    int min_args;
    int max_args;  // -1: variadic
};

constexpr std::array<FuncInfo, 11> kFunctions{{
    {"abs", Func::Abs, 1, 1},
    {"sqrt", Func::Sqrt, 1, 1},
    {"exp", Func::Exp, 1, 1},
    {"sin", Func::Sin, 1, 1},
    {"cos", Func::Cos, 1, 1},
    {"tanh", Func::Tanh, 1, 1},
    {"min", Func::Min, 2, -1},
    {"max", Func::Max, 2, -1},
    {"pos", Func::Pos, 1, 1},
    {"neg", Func::NegPart, 1, 1},
    {"clamp", Func::Clamp, 3, 3},
}};

const FuncInfo* find_function(std::string_view name) {
    for (const auto& f : kFunctions) {
        if (f.name == name) return &f;
    }
    return nullptr;
}

std::string_view function_name(Func f) {
    for (const auto& info : kFunctions) {
        if (info.func == f) return info.name;
    }
    return "?";
}

std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

}  // namespace

struct Expr::Node {
    enum class Kind : std::uint8_t { Number, Var, Neg, Add, Sub, Mul, Div, Pow, Call };

    Kind kind = Kind::Number;
    double value = 0.0;
    VarRef var{};
    int exponent = 0;
    Func func = Func::Abs;
    std::vector<std::shared_ptr<const Node>> kids;
};

using NodePtr = std::shared_ptr<const Expr::Node>;

namespace {

enum class Op : std::uint8_t {
    Const, LoadT, LoadX, LoadY, LoadZ, LoadU,
    Neg, Add, Sub, Mul, Div, PowI,
    Abs, Sqrt, Exp, Sin, Cos, Tanh, Min, Max, Pos, NegPart, Clamp
};

struct Instr {
    Op op;
    std::uint16_t arg = 0;
    int iarg = 0;
    double value = 0.0;
};

NodePtr make_number(double v) {
    auto n = std::make_shared<Expr::Node>();
    n->kind = Expr::Node::Kind::Number;
    n->value = v;
    return n;
}

NodePtr make_var(VarRef v) {
    auto n = std::make_shared<Expr::Node>();
    n->kind = Expr::Node::Kind::Var;
    n->var = v;
    return n;
}

NodePtr make_unary(Expr::Node::Kind k, NodePtr a) {
    auto n = std::make_shared<Expr::Node>();
    n->kind = k;
    n->kids.push_back(std::move(a));
    return n;
}

NodePtr make_binary(Expr::Node::Kind k, NodePtr a, NodePtr b) {
    auto n = std::make_shared<Expr::Node>();
    n->kind = k;
    n->kids.push_back(std::move(a));
    n->kids.push_back(std::move(b));
    return n;
}

class Parser {
public:
    Parser(std::string_view text, const ExprContext& ctx) : text_(text), ctx_(ctx) {}

    NodePtr parse() {
        skip_ws();
        if (pos_ >= text_.size()) throw ParseError("empty expression", pos_);
        auto e = expr();
        skip_ws();
        if (pos_ != text_.size()) {
            throw ParseError(std::string("unexpected character '") + text_[pos_] + "'", pos_);
        }
        return e;
    }

private:
    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) {
            if (pos_ >= text_.size()) {
                throw ParseError(std::string("expected '") + c + "' but reached end of input", pos_);
            }
            throw ParseError(std::string("expected '") + c + "'", pos_);
        }
    }

    NodePtr expr() {
        auto lhs = term();
        for (;;) {
            if (accept('+')) {
                lhs = make_binary(Expr::Node::Kind::Add, lhs, term());
            } else if (accept('-')) {
                lhs = make_binary(Expr::Node::Kind::Sub, lhs, term());
            } else {
                return lhs;
            }
        }
    }

    NodePtr term() {
        auto lhs = factor();
        for (;;) {
            if (accept('*')) {
                lhs = make_binary(Expr::Node::Kind::Mul, lhs, factor());
            } else if (accept('/')) {
                lhs = make_binary(Expr::Node::Kind::Div, lhs, factor());
            } else {
                return lhs;
            }
        }
    }

    NodePtr factor() {
        const bool negate = accept('-');
        auto base = atom();
        if (accept('^')) {
            skip_ws();
            const std::size_t start = pos_;
            bool neg_exp = false;
            if (pos_ < text_.size() && text_[pos_] == '-') {
                neg_exp = true;
                ++pos_;
            }
            const std::size_t digits = pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            if (digits == pos_) throw ParseError("expected integer exponent after '^'", start);
            int value = 0;
            auto res = std::from_chars(text_.data() + digits, text_.data() + pos_, value);
            if (res.ec != std::errc{} || value > 1024) {
                throw ParseError("exponent out of range", start);
            }
            auto n = std::make_shared<Expr::Node>();
            n->kind = Expr::Node::Kind::Pow;
            n->exponent = neg_exp ? -value : value;
            n->kids.push_back(std::move(base));
            base = n;
        }
        if (negate) return make_unary(Expr::Node::Kind::Neg, base);
        return base;
    }

    NodePtr atom() {
        skip_ws();
        if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
        const char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            auto e = expr();
            expect(')');
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
        throw ParseError(std::string("unexpected character '") + c + "'", pos_);
    }

    NodePtr number() {
        const std::size_t start = pos_;
        auto is_digit = [&](std::size_t i) {
            return i < text_.size() && std::isdigit(static_cast<unsigned char>(text_[i]));
        };
        while (is_digit(pos_)) ++pos_;
        if (pos_ < text_.size() && text_[pos_] == '.') {
            ++pos_;
            while (is_digit(pos_)) ++pos_;
        }
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            std::size_t p = pos_ + 1;
            if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) ++p;
            if (is_digit(p)) {
                pos_ = p;
                while (is_digit(pos_)) ++pos_;
            }
        }
        double v = 0.0;
        auto res = std::from_chars(text_.data() + start, text_.data() + pos_, v);
        if (res.ec != std::errc{} || res.ptr != text_.data() + pos_ || !std::isfinite(v)) {
            throw ParseError("malformed number", start);
        }
        return make_number(v);
    }

    NodePtr identifier() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
            ++pos_;
        }
        const std::string_view name = text_.substr(start, pos_ - start);

        skip_ws();
        const bool is_call = pos_ < text_.size() && text_[pos_] == '(';
        if (is_call) {
            const FuncInfo* info = find_function(name);
            if (info == nullptr) {
                throw ParseError("unknown function '" + std::string(name) + "'", start);
            }
            ++pos_;
            auto n = std::make_shared<Expr::Node>();
            n->kind = Expr::Node::Kind::Call;
            n->func = info->func;
            n->kids.push_back(expr());
            while (accept(',')) n->kids.push_back(expr());
            expect(')');
            const int nargs = static_cast<int>(n->kids.size());
            if (nargs < info->min_args || (info->max_args >= 0 && nargs > info->max_args)) {
                throw ParseError("function '" + std::string(name) + "' called with " +
                                     std::to_string(nargs) + " argument(s)",
                                 start);
            }
            return n;
        }

        if (find_function(name) != nullptr) {
            throw ParseError("function '" + std::string(name) + "' requires arguments", start);
        }
        if (auto v = resolve_variable(name)) return make_var(*v);
        if (auto it = ctx_.constants.find(name); it != ctx_.constants.end()) {
            return make_number(it->second);
        }
        if (name == "pi") return make_number(std::numbers::pi);
        throw ParseError("unknown identifier '" + std::string(name) + "'", start);
    }

    std::optional<VarRef> resolve_variable(std::string_view name) const {
        if (name == "t") return VarRef{VarKind::Time, 0};
        if (name == "y") return VarRef{VarKind::Value, 0};
        if (name.size() < 2) return std::nullopt;
        VarKind kind{};
        std::size_t dim = 0;
        switch (name.front()) {
            case 'x': kind = VarKind::State; dim = ctx_.state_dim; break;
            case 'z': kind = VarKind::Gradient; dim = ctx_.noise_dim; break;
            case 'u': kind = VarKind::Control; dim = ctx_.control_dim; break;
            default: return std::nullopt;
        }
        const auto digits = name.substr(1);
        if (!std::all_of(digits.begin(), digits.end(),
                         [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); }) ||
            digits.front() == '0') {
            return std::nullopt;
        }
        std::size_t idx = 0;
        auto res = std::from_chars(digits.data(), digits.data() + digits.size(), idx);
        if (res.ec != std::errc{} || idx < 1 || idx > dim) return std::nullopt;
        return VarRef{kind, static_cast<std::uint16_t>(idx - 1)};
    }

    std::string_view text_;
    const ExprContext& ctx_;
    std::size_t pos_ = 0;
};

void print_node(const Expr::Node& n, std::string& out) {
    using K = Expr::Node::Kind;
    switch (n.kind) {
        case K::Number:
            if (n.value < 0.0 || (n.value == 0.0 && std::signbit(n.value))) {
                out += "(-";
                out += format_double(-n.value);
                out += ')';
            } else {
                out += format_double(n.value);
            }
            return;
        case K::Var:
            switch (n.var.kind) {
                case VarKind::Time: out += 't'; break;
                case VarKind::Value: out += 'y'; break;
                case VarKind::State: out += 'x' + std::to_string(n.var.index + 1); break;
                case VarKind::Gradient: out += 'z' + std::to_string(n.var.index + 1); break;
                case VarKind::Control: out += 'u' + std::to_string(n.var.index + 1); break;
            }
            return;
        case K::Neg:
            out += "(-";
            print_node(*n.kids[0], out);
            out += ')';
            return;
        case K::Add:
        case K::Sub:
        case K::Mul:
        case K::Div: {
            const char op = n.kind == K::Add ? '+' : n.kind == K::Sub ? '-' : n.kind == K::Mul ? '*' : '/';
            out += '(';
            print_node(*n.kids[0], out);
            out += ' ';
            out += op;
            out += ' ';
            print_node(*n.kids[1], out);
            out += ')';
            return;
        }
        case K::Pow:
            out += '(';
            print_node(*n.kids[0], out);
            out += ")^";
            out += std::to_string(n.exponent);
            return;
        case K::Call:
            out += function_name(n.func);
            out += '(';
            for (std::size_t i = 0; i < n.kids.size(); ++i) {
                if (i) out += ", ";
                print_node(*n.kids[i], out);
            }
            out += ')';
            return;
    }
}

void compile_node(const Expr::Node& n, std::vector<Instr>& code, int& depth, int& max_depth) {
    using K = Expr::Node::Kind;
    auto push = [&](Instr in) {
        code.push_back(in);
        ++depth;
        max_depth = std::max(max_depth, depth);
    };
    switch (n.kind) {
        case K::Number: push({Op::Const, 0, 0, n.value}); return;
        case K::Var:
            switch (n.var.kind) {
                case VarKind::Time: push({Op::LoadT}); break;
                case VarKind::Value: push({Op::LoadY}); break;
                case VarKind::State: push({Op::LoadX, n.var.index}); break;
                case VarKind::Gradient: push({Op::LoadZ, n.var.index}); break;
                case VarKind::Control: push({Op::LoadU, n.var.index}); break;
            }
            return;
        case K::Neg:
            compile_node(*n.kids[0], code, depth, max_depth);
            code.push_back({Op::Neg});
            return;
        case K::Add:
        case K::Sub:
        case K::Mul:
        case K::Div:
            compile_node(*n.kids[0], code, depth, max_depth);
            compile_node(*n.kids[1], code, depth, max_depth);
            code.push_back({n.kind == K::Add   ? Op::Add
                            : n.kind == K::Sub ? Op::Sub
                            : n.kind == K::Mul ? Op::Mul
                                               : Op::Div});
            --depth;
            return;
        case K::Pow:
            compile_node(*n.kids[0], code, depth, max_depth);
            code.push_back({Op::PowI, 0, n.exponent});
            return;
        case K::Call: {
            for (const auto& k : n.kids) compile_node(*k, code, depth, max_depth);
            const int nargs = static_cast<int>(n.kids.size());
            Op op{};
            switch (n.func) {
                case Func::Abs: op = Op::Abs; break;
                case Func::Sqrt: op = Op::Sqrt; break;
                case Func::Exp: op = Op::Exp; break;
                case Func::Sin: op = Op::Sin; break;
                case Func::Cos: op = Op::Cos; break;
                case Func::Tanh: op = Op::Tanh; break;
                case Func::Min: op = Op::Min; break;
                case Func::Max: op = Op::Max; break;
                case Func::Pos: op = Op::Pos; break;
                case Func::NegPart: op = Op::NegPart; break;
                case Func::Clamp: op = Op::Clamp; break;
            }
            code.push_back({op, 0, nargs});
            depth -= nargs - 1;
            return;
        }
    }
}

double pow_int(double base, int e) {
    if (e < 0) {
        if (base == 0.0) throw EvalError("division by zero in negative power");
        return 1.0 / pow_int(base, -e);
    }
    double result = 1.0;
    while (e > 0) {
        if (e & 1) result *= base;
        base *= base;
        e >>= 1;
    }
    return result;
}

void collect(const Expr::Node& n, VarKind kind, bool& found, std::size_t& extent) {
    if (n.kind == Expr::Node::Kind::Var && n.var.kind == kind) {
        found = true;
        extent = std::max<std::size_t>(extent, n.var.index + 1);
    }
    for (const auto& k : n.kids) collect(*k, kind, found, extent);
}

bool has_vars(const Expr::Node& n) {
    if (n.kind == Expr::Node::Kind::Var) return true;
    return std::any_of(n.kids.begin(), n.kids.end(), [](const NodePtr& k) { return has_vars(*k); });
}

NodePtr substitute_node(const NodePtr& n, VarRef var, const NodePtr& repl) {
    if (n->kind == Expr::Node::Kind::Var) {
        const bool scalar = var.kind == VarKind::Time || var.kind == VarKind::Value;
        if (n->var.kind == var.kind && (scalar || n->var.index == var.index)) return repl;
        return n;
    }
    if (n->kids.empty()) return n;
    auto copy = std::make_shared<Expr::Node>(*n);
    for (auto& k : copy->kids) k = substitute_node(k, var, repl);
    return copy;
}

}  // namespace

struct Expr::Program {
    std::vector<Instr> code;
    int max_depth = 1;
    bool constant = true;
    double constant_value = 0.0;
};

Expr::Expr() : Expr(make_number(0.0)) {}

Expr::Expr(std::shared_ptr<const Node> root) : root_(std::move(root)) {
    auto prog = std::make_shared<Program>();
    int depth = 0;
    compile_node(*root_, prog->code, depth, prog->max_depth);
    prog->constant = false;
    program_ = prog;
    if (!has_vars(*root_)) {
        // Constant trees may still fail (1/0); those keep evaluating lazily and rethrow.
        try {
            prog->constant_value = eval(EvalPoint{});
            prog->constant = true;
        } catch (const EvalError&) {
        }
    }
}

Expr Expr::parse(std::string_view text, const ExprContext& ctx) {
    Parser p(text, ctx);
    return Expr(p.parse());
}

Expr Expr::constant(double value) { return Expr(make_number(value)); }

Expr Expr::variable(VarRef var) { return Expr(make_var(var)); }

std::string Expr::to_string() const {
    std::string out;
    print_node(*root_, out);
    return out;
}

bool Expr::is_constant() const { return program_->constant; }

bool Expr::depends_on(VarKind kind) const {
    bool found = false;
    std::size_t extent = 0;
    collect(*root_, kind, found, extent);
    return found;
}

std::size_t Expr::index_extent(VarKind kind) const {
    bool found = false;
    std::size_t extent = 0;
    collect(*root_, kind, found, extent);
    if (found && (kind == VarKind::Time || kind == VarKind::Value)) return 1;
    return extent;
}

Expr Expr::substitute(VarRef var, const Expr& replacement) const {
    return Expr(substitute_node(root_, var, replacement.root_));
}

Expr operator+(const Expr& a, const Expr& b) { return Expr(make_binary(Expr::Node::Kind::Add, a.root_, b.root_)); }
Expr operator-(const Expr& a, const Expr& b) { return Expr(make_binary(Expr::Node::Kind::Sub, a.root_, b.root_)); }
Expr operator*(const Expr& a, const Expr& b) { return Expr(make_binary(Expr::Node::Kind::Mul, a.root_, b.root_)); }
Expr operator/(const Expr& a, const Expr& b) { return Expr(make_binary(Expr::Node::Kind::Div, a.root_, b.root_)); }
Expr operator-(const Expr& a) { return Expr(make_unary(Expr::Node::Kind::Neg, a.root_)); }

double Expr::eval(const EvalPoint& p) const {
    const Program& prog = *program_;
    if (prog.constant) return prog.constant_value;

    constexpr int kInline = 32;
    std::array<double, kInline> small{};
    std::vector<double> big;
    double* st = small.data();
    if (prog.max_depth > kInline) {
        big.resize(static_cast<std::size_t>(prog.max_depth));
        st = big.data();
    }
    int sp = 0;
    for (const Instr& in : prog.code) {
        switch (in.op) {
            case Op::Const: st[sp++] = in.value; break;
            case Op::LoadT: st[sp++] = p.t; break;
            case Op::LoadY: st[sp++] = p.y; break;
            case Op::LoadX: st[sp++] = p.x[in.arg]; break;
            case Op::LoadZ: st[sp++] = p.z[in.arg]; break;
            case Op::LoadU: st[sp++] = p.u[in.arg]; break;
            case Op::Neg: st[sp - 1] = -st[sp - 1]; break;
            case Op::Add: --sp; st[sp - 1] += st[sp]; break;
            case Op::Sub: --sp; st[sp - 1] -= st[sp]; break;
            case Op::Mul: --sp; st[sp - 1] *= st[sp]; break;
            case Op::Div:
                --sp;
                if (st[sp] == 0.0) throw EvalError("division by zero");
                st[sp - 1] /= st[sp];
                break;
            case Op::PowI: st[sp - 1] = pow_int(st[sp - 1], in.iarg); break;
            case Op::Abs: st[sp - 1] = std::fabs(st[sp - 1]); break;
            case Op::Sqrt:
                if (st[sp - 1] < 0.0) throw EvalError("sqrt of negative argument");
                st[sp - 1] = std::sqrt(st[sp - 1]);
                break;
            case Op::Exp: st[sp - 1] = std::exp(st[sp - 1]); break;
            case Op::Sin: st[sp - 1] = std::sin(st[sp - 1]); break;
            case Op::Cos: st[sp - 1] = std::cos(st[sp - 1]); break;
            case Op::Tanh: st[sp - 1] = std::tanh(st[sp - 1]); break;
            case Op::Min: {
                const int n = in.iarg;
                double m = st[sp - n];
                for (int i = 1; i < n; ++i) m = std::min(m, st[sp - n + i]);
                sp -= n - 1;
                st[sp - 1] = m;
                break;
            }
            case Op::Max: {
                const int n = in.iarg;
                double m = st[sp - n];
                for (int i = 1; i < n; ++i) m = std::max(m, st[sp - n + i]);
                sp -= n - 1;
                st[sp - 1] = m;
                break;
            }
            case Op::Pos: st[sp - 1] = std::max(st[sp - 1], 0.0); break;
            case Op::NegPart: st[sp - 1] = std::max(-st[sp - 1], 0.0); break;
            case Op::Clamp: {
                const double hi = st[sp - 1];
                const double lo = st[sp - 2];
                sp -= 2;
                st[sp - 1] = std::min(std::max(st[sp - 1], lo), hi);
                break;
            }
        }
    }
    return st[0];
}

}  // namespace hjblab
