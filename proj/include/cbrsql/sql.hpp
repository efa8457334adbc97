// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cbrsql/util.hpp"

namespace cbrsql {
struct SchemaDescriptor;
}

namespace cbrsql::sql {

// Dialect: SELECT <agg items> FROM <table> (INNER JOIN <table> ON a.x = b.y)*
// [WHERE <conditions>], where conditions are a flat AND/OR chain with
// optional one-level parenthesized groups. Aggregations are COUNT, MAX, MIN,
// AVG, or none; comparison operators are =, >, <, <=, >=.

enum class AggOp { None, Count, Max, Min, Avg };
enum class ConOp { Eq, Gt, Lt, Le, Ge };
enum class Connective { And, Or };

const char* agg_op_name(AggOp op);   // "NULL" for AggOp::None
const char* con_op_text(ConOp op);   // "=", ">", ...

// Identifier reference; table is empty for bare column names. Identifier
// comparisons are case-insensitive throughout.
struct QualifiedColumn {
  std::string table;
  std::string column;
};

// A literal value in a condition. Text keeps the characters between the
// quotes verbatim (case preserved); Number keeps the source spelling; Mask is
// the [TAG#n] placeholder produced by entity masking.
struct Literal {
  enum class Kind { Text, Number, Mask };
  Kind kind = Kind::Text;
  std::string text;      // Text/Number payload
  std::string mask_tag;  // Mask only
  int mask_index = 0;    // Mask only, 1-based occurrence in question order
};

// An unresolved schema element emitted during template construction:
// ["element"]@[TAG] in value position, [element]@[TAG] elsewhere.
struct Placeholder {
  enum class Slot { Table, Column, Value };
  Slot slot = Slot::Value;
  std::string element;  // predicted surface text, verbatim
  std::string tag;      // entity category tag
};

using TableSlot = std::variant<std::string, Placeholder>;
using ColumnSlot = std::variant<QualifiedColumn, Placeholder>;
using ValueSlot = std::variant<Literal, Placeholder>;

struct AggItemT {
  AggOp op = AggOp::None;
  bool distinct = false;
  ColumnSlot column;
};

struct JoinT {
  TableSlot table;
  // Join keys are always concrete; orientation is normalized so the left key
  // references an already-introduced table when that is unambiguous.
  QualifiedColumn left_key;
  QualifiedColumn right_key;
};

struct ConditionT {
  ColumnSlot column;
  ConOp op = ConOp::Eq;
  ValueSlot value;
};

// Half-open run of condition indices wrapped in parentheses; always >= 2 wide.
struct GroupSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Query shape that may still contain placeholders. connectives[i] joins
// conditions[i] and conditions[i+1]; groups are disjoint and sorted.
struct ParameterizedSql {
  std::vector<AggItemT> agg_items;
  TableSlot primary_table;
  std::vector<JoinT> joins;
  std::vector<ConditionT> conditions;
  std::vector<Connective> connectives;
  std::vector<GroupSpan> groups;

  int placeholder_count() const;
};

// Fully grounded query: same shape, no placeholders.
struct AggItem {
  AggOp op = AggOp::None;
  bool distinct = false;
  QualifiedColumn column;
};

struct Join {
  std::string table;
  QualifiedColumn left_key;
  QualifiedColumn right_key;
};

struct Condition {
  QualifiedColumn column;
  ConOp op = ConOp::Eq;
  Literal value;
};

struct SqlQuery {
  std::vector<AggItem> agg_items;
  std::string primary_table;
  std::vector<Join> joins;
  std::vector<Condition> conditions;
  std::vector<Connective> connectives;
  std::vector<GroupSpan> groups;

  // Primary table followed by join tables, in clause order.
  std::vector<std::string> tables() const;
};

// Parsing. parse_template accepts placeholders and masks; parse_sql rejects
// any remaining placeholder. Both throw SqlParseError on out-of-dialect
// input, naming the offending token and byte offset.
ParameterizedSql parse_template(std::string_view text);
SqlQuery parse_sql(std::string_view text);

// Conversions. to_concrete throws SqlParseError listing unresolved
// placeholders; to_template is total.
SqlQuery to_concrete(const ParameterizedSql& tmpl);
ParameterizedSql to_template(const SqlQuery& query);

// Canonical single-line rendering: uppercase keywords, single spaces,
// TABLE."COLUMN" in select/condition position, bare TABLE.COLUMN join keys,
// double-quoted text literals. render(parse(render(x))) == render(x).
std::string render(const ParameterizedSql& tmpl);
std::string render(const SqlQuery& query);

// Structural equality with case-insensitive identifiers and case-sensitive
// literals. tree_equal is order-sensitive everywhere; canonical_equal treats
// a WHERE chain (and each group) as a multiset of units when all its
// connectives are the same kind.
bool tree_equal(const SqlQuery& a, const SqlQuery& b);
bool canonical_equal(const SqlQuery& a, const SqlQuery& b);

// Clause decomposition used by the per-aspect accuracy breakdown. Sets are
// deduplicated and sorted; multisets sorted with duplicates kept.
struct ClauseDecomposition {
  std::vector<std::string> agg_ops;      // set
  std::vector<std::string> agg_columns;  // set
  std::vector<std::string> tables;       // set
  std::vector<std::string> con_col_ops;  // multiset of "column op"
  std::vector<std::string> con_values;   // multiset of typed literal keys
};
ClauseDecomposition decompose(const SqlQuery& query);

// Entity masking of gold SQL. Spans arrive in question order; the n in
// [TAG#n] counts occurrences of TAG over that span order whether or not the
// span matches a condition value, so question-side and SQL-side numbering
// stay aligned. Matching prefers exact literal text, then case-insensitive.
struct SpanValue {
  std::string text;
  std::string category;
};
struct MaskResult {
  SqlQuery masked;
  std::string text;          // canonical rendering of .masked
  std::size_t unmatched = 0; // spans that found no literal to replace
};
MaskResult mask_sql(const SqlQuery& query, const std::vector<SpanValue>& spans);

// Placeholder resolution. Placeholders are numbered by appearance order
// (select items, then tables, then conditions left to right). A value
// binding may rebind the enclosing condition's column when the source
// discovery stage matched a cell from a different column.
struct Binding {
  std::string value;                 // value-slot payload, raw text
  std::optional<std::string> table;  // table-slot payload or column rebind
  std::optional<std::string> column; // column-slot payload or column rebind
};
using BindingMap = std::map<int, Binding>;

// Substitutes bindings and validates every table/column reference against
// the schema; throws PipelineError naming the offending element. Value
// literal kind follows the bound column's declared kind. With an empty
// template placeholder set this is the identity (plus validation).
SqlQuery substitute(const ParameterizedSql& tmpl, const BindingMap& bindings,
                    const SchemaDescriptor& schema);

// Enumerates placeholders with their appearance-order ordinals.
struct PlaceholderRef {
  int ordinal = 0;
  Placeholder placeholder;
};
std::vector<PlaceholderRef> list_placeholders(const ParameterizedSql& tmpl);

}  // namespace cbrsql::sql
