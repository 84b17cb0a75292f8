#pragma once

#include "tsgrid/algebra.hpp"
#include "tsgrid/series.hpp"

#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace tsgrid::expr {

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

/// Nameable comparison predicate, restricted to {>, <, >=, <=, =} against a
/// constant so that selections have a stable textual form.
struct PredicateSpec {
    Predicate::Cmp cmp = Predicate::Cmp::gt;
    double threshold = 0;

    std::string text() const;
    Predicate to_predicate() const;
    friend bool operator==(const PredicateSpec&, const PredicateSpec&) = default;
};

struct Scalar {
    double v = 0;
    friend bool operator==(const Scalar&, const Scalar&) = default;
};
struct WindowSize {
    int64_t w = 1;
    friend bool operator==(const WindowSize&, const WindowSize&) = default;
};
struct FnName {
    std::string name;
    friend bool operator==(const FnName&, const FnName&) = default;
};

using Arg = std::variant<ExprPtr, Scalar, WindowSize, FnName, PredicateSpec>;

/// A functional computation tree naming a base or derived series. Leaves
/// reference base series by id; interior nodes apply a catalog operator.
/// Trees are immutable and shared by pointer.
struct Expr {
    std::string op;        // empty at a base leaf
    std::string base;      // series id at a base leaf
    std::vector<Arg> args; // operator arguments, in call order

    bool is_base() const { return op.empty(); }

    static ExprPtr make_base(std::string name);
    /// Validates the operator against the catalog (name, arity, arg kinds,
    /// window/scalar invariants) and builds the node.
    static ExprPtr apply(const std::string& op, std::vector<Arg> args);
};

bool expr_equal(const ExprPtr& a, const ExprPtr& b);

/// Canonical textual identity of a series; `key()` is the versioned form
/// used for network index keys.
struct SeriesName {
    std::string text;

    std::string key() const { return "v1:" + text; }
    friend auto operator<=>(const SeriesName&, const SeriesName&) = default;
};

/// Operator catalog entry. Fixed-signature operators list their argument
/// kinds; JOIN is variadic (one or more series followed by a map name).
enum class ArgKind : uint8_t { series, scalar, window, fn, predicate };
struct OpSig {
    std::vector<ArgKind> fixed;
    bool variadic_series = false;
};
const OpSig* find_op(const std::string& name);

/// Parses `NAME | OP '(' arg (',' arg)* ')'`. Numbers are coerced to the
/// window or scalar slot the operator expects; `>c`-style tokens form
/// selection predicates. Throws SyntaxError (with byte position),
/// UnknownOperator or ArityError.
ExprPtr parse(std::string_view text);

/// Byte-stable textual form; scalars use shortest round-trip decimals.
std::string serialize(const ExprPtr& t);

/// Rewrites to the unique normal form: scales sink through the linear
/// operators (MAVG, MOM, MSUB) to the leaves, nested scales merge, unit
/// scales vanish, and commutative join arguments sort by their serialized
/// form. Idempotent; evaluation-equivalent to the input.
ExprPtr canonicalize(const ExprPtr& t);

/// serialize(canonicalize(t)) — the global name of the derived series.
SeriesName series_name(const ExprPtr& t);

using Store = std::map<std::string, TimeSeries>;

/// Centralized bottom-up evaluation against in-memory base series.
TimeSeries evaluate(const ExprPtr& t, const Store& store);

/// Extra items to the left of a position this operator alone must read.
int64_t own_reach(const Expr& node);

/// Left reach accumulated over nested windowed operators; a segment can be
/// computed locally iff this does not exceed its halo.
int64_t total_reach(const ExprPtr& t);

/// Expands compound operators (MACD) into their defining composition so
/// every materialized intermediate carries its own canonical name.
/// Canonical input yields canonical output.
ExprPtr expand_macros(const ExprPtr& t);

/// Base-series ids referenced by the tree (deduplicated, sorted).
std::vector<std::string> base_leaves(const ExprPtr& t);

} // namespace tsgrid::expr
