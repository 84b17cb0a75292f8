#include "tsgrid/expr.hpp"

#include "tsgrid/errors.hpp"
#include "tsgrid/indicators.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

namespace tsgrid::expr {

namespace {

const std::map<std::string, OpSig>& catalog() {
    using K = ArgKind;
    static const std::map<std::string, OpSig> ops = {
        {"MAVG", {{K::series, K::window}, false}},
        {"EMA", {{K::series, K::scalar, K::window}, false}},
        {"MOM", {{K::series, K::window}, false}},
        {"SCALE", {{K::series, K::scalar}, false}},
        {"MSUB", {{K::series, K::series}, false}},
        {"MACD", {{K::series, K::window, K::window, K::window}, false}},
        {"SEL", {{K::series, K::predicate}, false}},
        {"JOIN", {{K::fn}, true}},
    };
    return ops;
}

std::string cmp_text(Predicate::Cmp c) {
    switch (c) {
    case Predicate::Cmp::gt: return ">";
    case Predicate::Cmp::lt: return "<";
    case Predicate::Cmp::ge: return ">=";
    case Predicate::Cmp::le: return "<=";
    case Predicate::Cmp::eq: return "=";
    }
    return "?";
}

} // namespace

std::string PredicateSpec::text() const {
    return cmp_text(cmp) + format_double(threshold);
}

Predicate PredicateSpec::to_predicate() const {
    return Predicate::compare(cmp, threshold);
}

const OpSig* find_op(const std::string& name) {
    auto it = catalog().find(name);
    return it == catalog().end() ? nullptr : &it->second;
}

ExprPtr Expr::make_base(std::string name) {
    if (name.empty())
        fail(Errc::syntax_error, "base series name is empty");
    auto e = std::make_shared<Expr>();
    e->base = std::move(name);
    return e;
}

ExprPtr Expr::apply(const std::string& op, std::vector<Arg> args) {
    const OpSig* sig = find_op(op);
    if (!sig)
        fail(Errc::unknown_operator, "unknown operator " + op);

    if (sig->variadic_series) {
        // JOIN: k series followed by the map name, k >= 1. The parser cannot
        // tell a bare trailing identifier from a series leaf, so coerce it.
        if (args.size() < 2)
            fail(Errc::arity_error,
                 op + " needs at least one series and a map name");
        if (auto* sub = std::get_if<ExprPtr>(&args.back());
            sub && (*sub)->is_base())
            args.back() = FnName{(*sub)->base};
        for (size_t i = 0; i + 1 < args.size(); ++i)
            if (!std::holds_alternative<ExprPtr>(args[i]))
                fail(Errc::arity_error,
                     op + ": argument " + std::to_string(i + 1) +
                         " must be a series");
        auto* fn = std::get_if<FnName>(&args.back());
        if (!fn)
            fail(Errc::arity_error, op + ": last argument must be a map name");
        map_fn(fn->name); // throws UnknownOperator for names off the catalog
    } else {
        if (args.size() != sig->fixed.size())
            fail(Errc::arity_error, op + " takes " +
                                        std::to_string(sig->fixed.size()) +
                                        " arguments, got " +
                                        std::to_string(args.size()));
        for (size_t i = 0; i < args.size(); ++i) {
            const Arg& a = args[i];
            bool ok = false;
            switch (sig->fixed[i]) {
            case ArgKind::series: ok = std::holds_alternative<ExprPtr>(a); break;
            case ArgKind::scalar: ok = std::holds_alternative<Scalar>(a); break;
            case ArgKind::window:
                ok = std::holds_alternative<WindowSize>(a);
                break;
            case ArgKind::fn: ok = std::holds_alternative<FnName>(a); break;
            case ArgKind::predicate:
                ok = std::holds_alternative<PredicateSpec>(a);
                break;
            }
            if (!ok)
                fail(Errc::arity_error, op + ": argument " +
                                            std::to_string(i + 1) +
                                            " has the wrong kind");
            if (auto* w = std::get_if<WindowSize>(&a))
                detail::check_window(w->w);
            if (auto* s = std::get_if<Scalar>(&a); s && !std::isfinite(s->v))
                fail(Errc::bad_params, op + ": scalar argument must be finite");
        }
        if (op == "EMA") {
            double alpha = std::get<Scalar>(args[1]).v;
            if (!(alpha >= 0.0 && alpha < 1.0))
                fail(Errc::bad_alpha, "EMA smoothing must satisfy 0 <= a < 1");
        }
        if (op == "MACD") {
            MacdParams p{std::get<WindowSize>(args[1]).w,
                         std::get<WindowSize>(args[2]).w,
                         std::get<WindowSize>(args[3]).w};
            p.validate();
        }
    }

    auto e = std::make_shared<Expr>();
    e->op = op;
    e->args = std::move(args);
    return e;
}

bool expr_equal(const ExprPtr& a, const ExprPtr& b) {
    if (a == b)
        return true;
    if (!a || !b)
        return false;
    if (a->op != b->op || a->base != b->base ||
        a->args.size() != b->args.size())
        return false;
    for (size_t i = 0; i < a->args.size(); ++i) {
        const Arg& x = a->args[i];
        const Arg& y = b->args[i];
        if (x.index() != y.index())
            return false;
        bool same = std::visit(
            [&](const auto& xv) {
                using T = std::decay_t<decltype(xv)>;
                const auto& yv = std::get<T>(y);
                if constexpr (std::is_same_v<T, ExprPtr>)
                    return expr_equal(xv, yv);
                else
                    return xv == yv;
            },
            x);
        if (!same)
            return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

struct Token {
    enum Kind { ident, number, cmp, lparen, rparen, comma, end } kind;
    std::string text;  // ident / cmp symbol
    double num = 0;    // number payload
    bool integral = false;
    size_t pos = 0;    // byte offset, for diagnostics
};

class Lexer {
public:
    explicit Lexer(std::string_view s) : s_(s) {}

    Token next() {
        while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_])))
            ++i_;
        size_t at = i_;
        if (i_ >= s_.size())
            return {Token::end, "", 0, false, at};
        char c = s_[i_];
        if (c == '(') { ++i_; return {Token::lparen, "(", 0, false, at}; }
        if (c == ')') { ++i_; return {Token::rparen, ")", 0, false, at}; }
        if (c == ',') { ++i_; return {Token::comma, ",", 0, false, at}; }
        if (c == '>' || c == '<' || c == '=') {
            std::string sym(1, c);
            ++i_;
            if ((c == '>' || c == '<') && i_ < s_.size() && s_[i_] == '=') {
                sym += '=';
                ++i_;
            }
            return {Token::cmp, sym, 0, false, at};
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t j = i_;
            while (j < s_.size() &&
                   (std::isalnum(static_cast<unsigned char>(s_[j])) ||
                    s_[j] == '_'))
                ++j;
            Token t{Token::ident, std::string(s_.substr(i_, j - i_)), 0, false,
                    at};
            i_ = j;
            return t;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' ||
            c == '+' || c == '.') {
            size_t j = i_;
            if (s_[j] == '-' || s_[j] == '+')
                ++j;
            bool saw_digit = false, saw_dot = false, saw_exp = false;
            while (j < s_.size()) {
                char d = s_[j];
                if (std::isdigit(static_cast<unsigned char>(d))) {
                    saw_digit = true;
                    ++j;
                } else if (d == '.' && !saw_dot && !saw_exp) {
                    saw_dot = true;
                    ++j;
                } else if ((d == 'e' || d == 'E') && saw_digit && !saw_exp) {
                    saw_exp = true;
                    ++j;
                    if (j < s_.size() && (s_[j] == '-' || s_[j] == '+'))
                        ++j;
                } else {
                    break;
                }
            }
            if (!saw_digit)
                fail(Errc::syntax_error,
                     "malformed number at position " + std::to_string(at));
            double v = 0;
            auto text = s_.substr(i_, j - i_);
            auto [p, ec] =
                std::from_chars(text.data(), text.data() + text.size(), v);
            if (ec != std::errc{} || p != text.data() + text.size())
                fail(Errc::syntax_error,
                     "malformed number at position " + std::to_string(at));
            Token t{Token::number, std::string(text), v, !saw_dot && !saw_exp,
                    at};
            i_ = j;
            return t;
        }
        fail(Errc::syntax_error, std::string("unexpected character '") + c +
                                     "' at position " + std::to_string(at));
    }

private:
    std::string_view s_;
    size_t i_ = 0;
};

class Parser {
public:
    explicit Parser(std::string_view s) : lex_(s) { advance(); }

    ExprPtr parse_all() {
        ExprPtr e = parse_series();
        expect(Token::end, "end of input");
        return e;
    }

private:
    void advance() { cur_ = lex_.next(); }

    void expect(Token::Kind k, const char* what) {
        if (cur_.kind != k)
            fail(Errc::syntax_error, std::string("expected ") + what +
                                         " at position " +
                                         std::to_string(cur_.pos));
        if (k != Token::end)
            advance();
    }

    ExprPtr parse_series() {
        if (cur_.kind != Token::ident)
            fail(Errc::syntax_error,
                 "expected a series or operator at position " +
                     std::to_string(cur_.pos));
        std::string name = cur_.text;
        advance();
        if (cur_.kind != Token::lparen) {
            if (find_op(name))
                fail(Errc::syntax_error,
                     "operator " + name + " needs an argument list");
            return Expr::make_base(std::move(name));
        }
        const OpSig* sig = find_op(name);
        if (!sig)
            fail(Errc::unknown_operator, "unknown operator " + name);
        advance(); // past '('
        std::vector<Arg> args;
        if (cur_.kind != Token::rparen) {
            args.push_back(parse_arg(name, *sig, args.size()));
            while (cur_.kind == Token::comma) {
                advance();
                args.push_back(parse_arg(name, *sig, args.size()));
            }
        }
        expect(Token::rparen, "')'");
        return Expr::apply(name, std::move(args));
    }

    // Expected kind of positional argument `idx`, from the signature.
    static ArgKind slot(const OpSig& sig, size_t idx, size_t /*total*/) {
        if (!sig.variadic_series)
            return idx < sig.fixed.size() ? sig.fixed[idx] : ArgKind::series;
        // JOIN: series until a map name closes the list. The lexical form
        // decides which one the argument is; default to series here and let
        // parse_arg pick fn for a bare identifier that names a map.
        return ArgKind::series;
    }

    Arg parse_arg(const std::string& op, const OpSig& sig, size_t idx) {
        switch (cur_.kind) {
        case Token::cmp: {
            std::string sym = cur_.text;
            advance();
            if (cur_.kind != Token::number)
                fail(Errc::syntax_error,
                     "predicate needs a numeric threshold at position " +
                         std::to_string(cur_.pos));
            PredicateSpec p;
            p.cmp = sym == ">"    ? Predicate::Cmp::gt
                    : sym == "<"  ? Predicate::Cmp::lt
                    : sym == ">=" ? Predicate::Cmp::ge
                    : sym == "<=" ? Predicate::Cmp::le
                                  : Predicate::Cmp::eq;
            p.threshold = cur_.num;
            advance();
            return p;
        }
        case Token::number: {
            ArgKind k = slot(sig, idx, 0);
            double v = cur_.num;
            bool integral = cur_.integral;
            size_t at = cur_.pos;
            advance();
            if (k == ArgKind::window) {
                if (!integral)
                    fail(Errc::syntax_error,
                         "window size must be an integer at position " +
                             std::to_string(at));
                return WindowSize{static_cast<int64_t>(v)};
            }
            return Scalar{v};
        }
        case Token::ident:
            // A nested expression or a bare leaf; Expr::apply turns a bare
            // trailing leaf into the variadic operator's map name.
            return parse_series();
        default:
            fail(Errc::syntax_error, "unexpected token in " + op +
                                         " arguments at position " +
                                         std::to_string(cur_.pos));
        }
    }

    Lexer lex_;
    Token cur_;
};

} // namespace

ExprPtr parse(std::string_view text) { return Parser(text).parse_all(); }

// ---------------------------------------------------------------------------
// Serialization

namespace {

void serialize_into(const ExprPtr& t, std::string& out) {
    if (t->is_base()) {
        out += t->base;
        return;
    }
    out += t->op;
    out += '(';
    bool first = true;
    for (const Arg& a : t->args) {
        if (!first)
            out += ',';
        first = false;
        std::visit(
            [&](const auto& v) {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, ExprPtr>)
                    serialize_into(v, out);
                else if constexpr (std::is_same_v<T, Scalar>)
                    out += format_double(v.v);
                else if constexpr (std::is_same_v<T, WindowSize>)
                    out += std::to_string(v.w);
                else if constexpr (std::is_same_v<T, FnName>)
                    out += v.name;
                else
                    out += v.text();
            },
            a);
    }
    out += ')';
}

} // namespace

std::string serialize(const ExprPtr& t) {
    std::string out;
    serialize_into(t, out);
    return out;
}

// ---------------------------------------------------------------------------
// Canonicalization

namespace {

const ExprPtr& series_arg(const ExprPtr& t, size_t i) {
    return std::get<ExprPtr>(t->args[i]);
}
double scalar_arg(const ExprPtr& t, size_t i) {
    return std::get<Scalar>(t->args[i]).v;
}
int64_t window_arg(const ExprPtr& t, size_t i) {
    return std::get<WindowSize>(t->args[i]).w;
}

ExprPtr rebuild(const ExprPtr& t, std::vector<Arg> args) {
    return Expr::apply(t->op, std::move(args));
}

// Root rewrite for a SCALE node whose child is already canonical. Sinks the
// scale through the linear operators, merges nested scales and drops unit
// scales; anything else (selections, joins, exponential smoothing, leaves)
// keeps the scale in place.
ExprPtr canon_scale(ExprPtr child, double k) {
    if (!child->is_base()) {
        if (child->op == "SCALE")
            return canon_scale(series_arg(child, 0), k * scalar_arg(child, 1));
        if (k == 1.0)
            return child;
        if (child->op == "MAVG" || child->op == "MOM")
            return Expr::apply(child->op,
                               {canon_scale(series_arg(child, 0), k),
                                WindowSize{window_arg(child, 1)}});
        if (child->op == "MSUB")
            return Expr::apply("MSUB",
                               {canon_scale(series_arg(child, 0), k),
                                canon_scale(series_arg(child, 1), k)});
    }
    if (k == 1.0)
        return child;
    return Expr::apply("SCALE", {std::move(child), Scalar{k}});
}

} // namespace

ExprPtr canonicalize(const ExprPtr& t) {
    if (t->is_base())
        return t;
    std::vector<Arg> args;
    args.reserve(t->args.size());
    for (const Arg& a : t->args) {
        if (auto* sub = std::get_if<ExprPtr>(&a))
            args.emplace_back(canonicalize(*sub));
        else
            args.push_back(a);
    }
    if (t->op == "SCALE")
        return canon_scale(std::get<ExprPtr>(args[0]),
                           std::get<Scalar>(args[1]).v);
    if (t->op == "JOIN" &&
        is_commutative_map(std::get<FnName>(args.back()).name)) {
        std::stable_sort(args.begin(), args.end() - 1,
                         [](const Arg& a, const Arg& b) {
                             return serialize(std::get<ExprPtr>(a)) <
                                    serialize(std::get<ExprPtr>(b));
                         });
    }
    return rebuild(t, std::move(args));
}

SeriesName series_name(const ExprPtr& t) {
    return SeriesName{serialize(canonicalize(t))};
}

// ---------------------------------------------------------------------------
// Evaluation

TimeSeries evaluate(const ExprPtr& t, const Store& store) {
    if (t->is_base()) {
        auto it = store.find(t->base);
        if (it == store.end())
            fail(Errc::unknown_series, "no series named " + t->base);
        return it->second;
    }
    if (t->op == "MACD")
        return evaluate(expand_macros(t), store);
    if (t->op == "MAVG")
        return mavg(evaluate(series_arg(t, 0), store), window_arg(t, 1));
    if (t->op == "EMA")
        return ema(evaluate(series_arg(t, 0), store), scalar_arg(t, 1),
                   window_arg(t, 2));
    if (t->op == "MOM")
        return mom(evaluate(series_arg(t, 0), store), window_arg(t, 1));
    if (t->op == "SCALE")
        return ts_scale(scalar_arg(t, 1), evaluate(series_arg(t, 0), store));
    if (t->op == "MSUB")
        return msub(evaluate(series_arg(t, 0), store),
                    evaluate(series_arg(t, 1), store));
    if (t->op == "SEL")
        return select(evaluate(series_arg(t, 0), store),
                      std::get<PredicateSpec>(t->args[1]).to_predicate());
    if (t->op == "JOIN") {
        std::vector<TimeSeries> inputs;
        inputs.reserve(t->args.size() - 1);
        for (size_t i = 0; i + 1 < t->args.size(); ++i)
            inputs.push_back(evaluate(series_arg(t, i), store));
        return join(inputs, map_fn(std::get<FnName>(t->args.back()).name));
    }
    fail(Errc::unknown_operator, "no evaluator for " + t->op);
}

// ---------------------------------------------------------------------------
// Planner support

int64_t own_reach(const Expr& node) {
    if (node.is_base())
        return 0;
    if (node.op == "MAVG")
        return std::get<WindowSize>(node.args[1]).w - 1;
    if (node.op == "EMA")
        return std::get<WindowSize>(node.args[2]).w - 1;
    if (node.op == "MOM")
        return std::get<WindowSize>(node.args[1]).w;
    if (node.op == "MACD") {
        int64_t slow = std::get<WindowSize>(node.args[2]).w;
        int64_t signal = std::get<WindowSize>(node.args[3]).w;
        return (slow - 1) + (signal - 1);
    }
    return 0; // pointwise: SCALE, MSUB, SEL, JOIN
}

int64_t total_reach(const ExprPtr& t) {
    if (t->is_base())
        return 0;
    int64_t deepest = 0;
    for (const Arg& a : t->args)
        if (auto* sub = std::get_if<ExprPtr>(&a))
            deepest = std::max(deepest, total_reach(*sub));
    return own_reach(*t) + deepest;
}

ExprPtr expand_macros(const ExprPtr& t) {
    if (t->is_base())
        return t;
    std::vector<Arg> args;
    args.reserve(t->args.size());
    for (const Arg& a : t->args) {
        if (auto* sub = std::get_if<ExprPtr>(&a))
            args.emplace_back(expand_macros(*sub));
        else
            args.push_back(a);
    }
    if (t->op == "MACD") {
        ExprPtr s = std::get<ExprPtr>(args[0]);
        int64_t fast = std::get<WindowSize>(args[1]).w;
        int64_t slow = std::get<WindowSize>(args[2]).w;
        int64_t signal = std::get<WindowSize>(args[3]).w;
        ExprPtr fast_line = Expr::apply("MAVG", {s, WindowSize{fast}});
        ExprPtr slow_line = Expr::apply("MAVG", {s, WindowSize{slow}});
        ExprPtr diff = Expr::apply("MSUB", {fast_line, slow_line});
        return Expr::apply("MAVG", {diff, WindowSize{signal}});
    }
    return rebuild(t, std::move(args));
}

std::vector<std::string> base_leaves(const ExprPtr& t) {
    std::set<std::string> names;
    auto walk = [&](auto&& self, const ExprPtr& node) -> void {
        if (node->is_base()) {
            names.insert(node->base);
            return;
        }
        for (const Arg& a : node->args)
            if (auto* sub = std::get_if<ExprPtr>(&a))
                self(self, *sub);
    };
    walk(walk, t);
    return {names.begin(), names.end()};
}

} // namespace tsgrid::expr
