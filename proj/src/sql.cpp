// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#include "cbrsql/sql.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "cbrsql/datamodel.hpp"

namespace cbrsql::sql {

const char* agg_op_name(AggOp op) {
  switch (op) {
    case AggOp::Count: return "COUNT";
    case AggOp::Max: return "MAX";
    case AggOp::Min: return "MIN";
    case AggOp::Avg: return "AVG";
    case AggOp::None: return "NULL";
  }
  return "NULL";
}

const char* con_op_text(ConOp op) {
  switch (op) {
    case ConOp::Eq: return "=";
    case ConOp::Gt: return ">";
    case ConOp::Lt: return "<";
    case ConOp::Le: return "<=";
    case ConOp::Ge: return ">=";
  }
  return "=";
}

namespace {

enum class Tok {
  Ident,
  Number,
  String,
  LParen,
  RParen,
  Comma,
  Op,
  Mask,
  Placeholder,
  End,
};

struct Token {
  Tok kind = Tok::End;
  std::size_t offset = 0;
  std::string text;        // Ident/Number/Op raw lexeme
  std::string str;         // String payload (between quotes)
  std::string mask_tag;    // Mask
  int mask_index = 0;      // Mask
  std::string ph_element;  // Placeholder
  std::string ph_tag;      // Placeholder

  std::string describe() const {
    switch (kind) {
      case Tok::End: return "end of input";
      case Tok::String: return "\"" + str + "\"";
      case Tok::Mask: return "[" + mask_tag + "#" + std::to_string(mask_index) + "]";
      case Tok::Placeholder: return "[" + ph_element + "]@[" + ph_tag + "]";
      default: return text;
    }
  }
};

bool is_tag_text(std::string_view s) {
  if (s.empty()) return false;
  if (!(s[0] >= 'A' && s[0] <= 'Z')) return false;
  for (char c : s)
    if (!((c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_')) return false;
  return true;
}

[[noreturn]] void lex_fail(const std::string& msg, std::size_t off, std::string tok) {
  throw SqlParseError(msg + " at offset " + std::to_string(off), off, std::move(tok));
}

std::vector<Token> lex(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto push = [&](Token t) { out.push_back(std::move(t)); };
  while (i < n) {
    char c = text[i];
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      ++i;
      continue;
    }
    Token t;
    t.offset = i;
    if (c == '(') {
      t.kind = Tok::LParen;
      t.text = "(";
      ++i;
    } else if (c == ')') {
      t.kind = Tok::RParen;
      t.text = ")";
      ++i;
    } else if (c == ',') {
      t.kind = Tok::Comma;
      t.text = ",";
      ++i;
    } else if (c == '.') {
      t.kind = Tok::Op;
      t.text = ".";
      ++i;
    } else if (c == '=' ) {
      t.kind = Tok::Op;
      t.text = "=";
      ++i;
    } else if (c == '<' || c == '>') {
      t.kind = Tok::Op;
      t.text = std::string(1, c);
      ++i;
      if (i < n && text[i] == '=') {
        t.text.push_back('=');
        ++i;
      }
    } else if (c == '"') {
      // Double-quoted region: a text literal in value position, an escaped
      // identifier elsewhere. "" escapes a quote.
      std::size_t j = i + 1;
      std::string payload;
      bool closed = false;
      while (j < n) {
        if (text[j] == '"') {
          if (j + 1 < n && text[j + 1] == '"') {
            payload.push_back('"');
            j += 2;
            continue;
          }
          closed = true;
          ++j;
          break;
        }
        payload.push_back(text[j]);
        ++j;
      }
      if (!closed) lex_fail("unterminated string", i, std::string(text.substr(i)));
      t.kind = Tok::String;
      t.str = std::move(payload);
      i = j;
    } else if (c == '[') {
      // Either a mask token [TAG#n] or a placeholder [element]@[TAG] /
      // ["element"]@[TAG]. The element scan is quote-aware so embedded
      // brackets inside quotes survive.
      std::size_t j = i + 1;
      std::string inner;
      bool quoted_element = false;
      bool closed = false;
      if (j < n && text[j] == '"') {
        quoted_element = true;
        ++j;
        while (j < n) {
          if (text[j] == '"') {
            if (j + 1 < n && text[j + 1] == '"') {
              inner.push_back('"');
              j += 2;
              continue;
            }
            ++j;
            break;
          }
          inner.push_back(text[j]);
          ++j;
        }
        if (j >= n || text[j] != ']')
          lex_fail("malformed bracketed token", i, std::string(text.substr(i, j - i)));
        closed = true;
        ++j;
      } else {
        bool in_quotes = false;
        while (j < n) {
          if (text[j] == '"') in_quotes = !in_quotes;
          if (text[j] == ']' && !in_quotes) {
            closed = true;
            ++j;
            break;
          }
          inner.push_back(text[j]);
          ++j;
        }
      }
      if (!closed) lex_fail("unterminated bracketed token", i, std::string(text.substr(i)));
      if (j < n && text[j] == '@') {
        ++j;
        if (j + 1 >= n || text[j] != '[')
          lex_fail("expected [TAG] after '@'", j, std::string(1, j < n ? text[j] : ' '));
        std::size_t k = text.find(']', j + 1);
        if (k == std::string_view::npos)
          lex_fail("unterminated tag bracket", j, std::string(text.substr(j)));
        std::string tag(text.substr(j + 1, k - j - 1));
        if (!is_tag_text(tag)) lex_fail("invalid category tag '" + tag + "'", j + 1, tag);
        t.kind = Tok::Placeholder;
        t.ph_element = std::move(inner);
        t.ph_tag = std::move(tag);
        i = k + 1;
      } else {
        if (quoted_element)
          lex_fail("quoted bracket token must be a placeholder", i, inner);
        std::size_t hash = inner.find('#');
        std::string tag = hash == std::string::npos ? inner : inner.substr(0, hash);
        std::string num = hash == std::string::npos ? "" : inner.substr(hash + 1);
        bool numeric = !num.empty() &&
                       std::all_of(num.begin(), num.end(),
                                   [](char d) { return d >= '0' && d <= '9'; });
        if (hash == std::string::npos || !is_tag_text(tag) || !numeric)
          lex_fail("malformed mask token '[" + inner + "]'", i, inner);
        t.kind = Tok::Mask;
        t.mask_tag = std::move(tag);
        t.mask_index = std::stoi(num);
        i = j;
      }
    } else if ((c >= '0' && c <= '9') ||
               (c == '-' && i + 1 < n && text[i + 1] >= '0' && text[i + 1] <= '9')) {
      std::size_t j = i + (c == '-' ? 1 : 0);
      bool dot = false;
      while (j < n && ((text[j] >= '0' && text[j] <= '9') || (text[j] == '.' && !dot))) {
        if (text[j] == '.') {
          // A trailing dot belongs to qualification, not the number.
          if (j + 1 >= n || !(text[j + 1] >= '0' && text[j + 1] <= '9')) break;
          dot = true;
        }
        ++j;
      }
      t.kind = Tok::Number;
      t.text = std::string(text.substr(i, j - i));
      i = j;
    } else if (is_word_char(c) || c == '_') {
      std::size_t j = i;
      while (j < n && (is_word_char(text[j]) || text[j] == '_')) ++j;
      t.kind = Tok::Ident;
      t.text = std::string(text.substr(i, j - i));
      i = j;
    } else {
      lex_fail("unexpected character '" + std::string(1, c) + "'", i, std::string(1, c));
    }
    push(std::move(t));
  }
  Token end;
  end.kind = Tok::End;
  end.offset = n;
  out.push_back(std::move(end));
  return out;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : toks_(lex(text)) {}

  ParameterizedSql parse() {
    ParameterizedSql q;
    expect_kw("SELECT");
    q.agg_items.push_back(parse_agg_item());
    while (at(Tok::Comma)) {
      ++pos_;
      q.agg_items.push_back(parse_agg_item());
    }
    expect_kw("FROM");
    q.primary_table = parse_table_slot();
    while (at_kw("INNER")) {
      ++pos_;
      expect_kw("JOIN");
      JoinT join;
      join.table = parse_table_slot();
      expect_kw("ON");
      join.left_key = parse_join_key();
      if (!(at(Tok::Op) && cur().text == "="))
        fail("expected '=' between join keys");
      ++pos_;
      join.right_key = parse_join_key();
      normalize_join(q, join);
      q.joins.push_back(std::move(join));
    }
    if (at_kw("WHERE")) {
      ++pos_;
      parse_where(q);
    }
    if (!at(Tok::End)) fail("unexpected token " + cur().describe());
    return q;
  }

 private:
  const Token& cur() const { return toks_[pos_]; }
  bool at(Tok k) const { return cur().kind == k; }
  bool at_kw(std::string_view kw) const {
    return at(Tok::Ident) && iequals(cur().text, kw);
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw SqlParseError(msg + " at offset " + std::to_string(cur().offset), cur().offset,
                        cur().describe());
  }
  void expect_kw(std::string_view kw) {
    if (!at_kw(kw)) fail("expected " + std::string(kw) + ", found " + cur().describe());
    ++pos_;
  }

  static std::optional<AggOp> agg_from_ident(std::string_view s) {
    if (iequals(s, "COUNT")) return AggOp::Count;
    if (iequals(s, "MAX")) return AggOp::Max;
    if (iequals(s, "MIN")) return AggOp::Min;
    if (iequals(s, "AVG")) return AggOp::Avg;
    return std::nullopt;
  }

  AggItemT parse_agg_item() {
    AggItemT item;
    if (at(Tok::Ident)) {
      auto op = agg_from_ident(cur().text);
      if (op && toks_[pos_ + 1].kind == Tok::LParen) {
        item.op = *op;
        pos_ += 2;
        if (at_kw("DISTINCT")) {
          item.distinct = true;
          ++pos_;
        }
        item.column = parse_column_slot();
        if (!at(Tok::RParen)) fail("expected ')' after aggregate column");
        ++pos_;
        return item;
      }
    }
    if (at_kw("DISTINCT")) {
      item.distinct = true;
      ++pos_;
    }
    item.column = parse_column_slot();
    return item;
  }

  TableSlot parse_table_slot() {
    if (at(Tok::Placeholder)) {
      Placeholder ph{Placeholder::Slot::Table, cur().ph_element, cur().ph_tag};
      ++pos_;
      return ph;
    }
    if (at(Tok::Ident) && !reserved(cur().text)) {
      std::string name = cur().text;
      ++pos_;
      return name;
    }
    fail("expected table name, found " + cur().describe());
  }

  static bool reserved(std::string_view s) {
    static const char* kws[] = {"SELECT", "DISTINCT", "FROM", "INNER", "JOIN",
                                "ON",     "WHERE",    "AND",  "OR"};
    for (const char* k : kws)
      if (iequals(s, k)) return true;
    return false;
  }

  // IDENT | STRING, optionally qualified by a leading IDENT|STRING and '.'.
  ColumnSlot parse_column_slot() {
    if (at(Tok::Placeholder)) {
      Placeholder ph{Placeholder::Slot::Column, cur().ph_element, cur().ph_tag};
      ++pos_;
      return ph;
    }
    QualifiedColumn qc;
    if (at(Tok::Ident) && !reserved(cur().text)) {
      qc.column = cur().text;
      ++pos_;
    } else if (at(Tok::String)) {
      qc.column = cur().str;
      ++pos_;
    } else {
      fail("expected column reference, found " + cur().describe());
    }
    if (at(Tok::Op) && cur().text == ".") {
      ++pos_;
      qc.table = std::move(qc.column);
      if (at(Tok::Ident) && !reserved(cur().text)) {
        qc.column = cur().text;
        ++pos_;
      } else if (at(Tok::String)) {
        qc.column = cur().str;
        ++pos_;
      } else {
        fail("expected column name after '.', found " + cur().describe());
      }
    }
    return qc;
  }

  QualifiedColumn parse_join_key() {
    ColumnSlot slot = parse_column_slot();
    if (std::holds_alternative<Placeholder>(slot))
      fail("join keys must be concrete columns");
    QualifiedColumn qc = std::get<QualifiedColumn>(slot);
    if (qc.table.empty()) fail("join keys must be table-qualified");
    return qc;
  }

  // Puts the already-introduced table on the left when that is unambiguous.
  void normalize_join(const ParameterizedSql& q, JoinT& join) const {
    auto known = [&](std::string_view t) {
      if (const auto* name = std::get_if<std::string>(&q.primary_table))
        if (iequals(*name, t)) return true;
      for (const auto& j : q.joins)
        if (const auto* name = std::get_if<std::string>(&j.table))
          if (iequals(*name, t)) return true;
      return false;
    };
    if (!known(join.left_key.table) && known(join.right_key.table))
      std::swap(join.left_key, join.right_key);
  }

  ConOp parse_con_op() {
    if (!at(Tok::Op) || cur().text == ".")
      fail("expected comparison operator, found " + cur().describe());
    std::string op = cur().text;
    ++pos_;
    if (op == "=") return ConOp::Eq;
    if (op == ">") return ConOp::Gt;
    if (op == "<") return ConOp::Lt;
    if (op == "<=") return ConOp::Le;
    if (op == ">=") return ConOp::Ge;
    fail("unsupported comparison operator '" + op + "'");
  }

  ValueSlot parse_value_slot() {
    if (at(Tok::Placeholder)) {
      Placeholder ph{Placeholder::Slot::Value, cur().ph_element, cur().ph_tag};
      ++pos_;
      return ph;
    }
    Literal lit;
    if (at(Tok::String)) {
      lit.kind = Literal::Kind::Text;
      lit.text = cur().str;
    } else if (at(Tok::Number)) {
      lit.kind = Literal::Kind::Number;
      lit.text = cur().text;
    } else if (at(Tok::Mask)) {
      lit.kind = Literal::Kind::Mask;
      lit.mask_tag = cur().mask_tag;
      lit.mask_index = cur().mask_index;
    } else {
      fail("expected literal value, found " + cur().describe());
    }
    ++pos_;
    return lit;
  }

  ConditionT parse_condition() {
    ConditionT c;
    c.column = parse_column_slot();
    c.op = parse_con_op();
    c.value = parse_value_slot();
    return c;
  }

  std::optional<Connective> peek_connective() const {
    if (at_kw("AND")) return Connective::And;
    if (at_kw("OR")) return Connective::Or;
    return std::nullopt;
  }

  void parse_term(ParameterizedSql& q) {
    if (at(Tok::LParen)) {
      ++pos_;
      std::size_t begin = q.conditions.size();
      q.conditions.push_back(parse_condition());
      while (auto conn = peek_connective()) {
        ++pos_;
        q.connectives.push_back(*conn);
        if (at(Tok::LParen)) fail("nested condition groups are not supported");
        q.conditions.push_back(parse_condition());
      }
      if (!at(Tok::RParen)) fail("expected ')' to close condition group");
      ++pos_;
      if (q.conditions.size() - begin >= 2)
        q.groups.push_back({begin, q.conditions.size()});
    } else {
      q.conditions.push_back(parse_condition());
    }
  }

  void parse_where(ParameterizedSql& q) {
    parse_term(q);
    while (auto conn = peek_connective()) {
      ++pos_;
      q.connectives.push_back(*conn);
      parse_term(q);
    }
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

std::string render_column(const QualifiedColumn& qc) {
  if (qc.table.empty()) return qc.column;
  return qc.table + ".\"" + qc.column + "\"";
}

std::string render_column_slot(const ColumnSlot& slot) {
  if (const auto* ph = std::get_if<Placeholder>(&slot))
    return "[" + ph->element + "]@[" + ph->tag + "]";
  return render_column(std::get<QualifiedColumn>(slot));
}

std::string render_table_slot(const TableSlot& slot) {
  if (const auto* ph = std::get_if<Placeholder>(&slot))
    return "[" + ph->element + "]@[" + ph->tag + "]";
  return std::get<std::string>(slot);
}

std::string quote_escaped(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  out.push_back('"');
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string render_literal(const Literal& lit) {
  switch (lit.kind) {
    case Literal::Kind::Text: return quote_escaped(lit.text);
    case Literal::Kind::Number: return lit.text;
    case Literal::Kind::Mask:
      return "[" + lit.mask_tag + "#" + std::to_string(lit.mask_index) + "]";
  }
  return "";
}

std::string render_value_slot(const ValueSlot& slot) {
  if (const auto* ph = std::get_if<Placeholder>(&slot))
    return "[" + quote_escaped(ph->element) + "]@[" + ph->tag + "]";
  return render_literal(std::get<Literal>(slot));
}

}  // namespace

int ParameterizedSql::placeholder_count() const {
  return static_cast<int>(list_placeholders(*this).size());
}

std::vector<std::string> SqlQuery::tables() const {
  std::vector<std::string> out;
  out.push_back(primary_table);
  for (const auto& j : joins) out.push_back(j.table);
  return out;
}

ParameterizedSql parse_template(std::string_view text) {
  return Parser(text).parse();
}

SqlQuery parse_sql(std::string_view text) {
  return to_concrete(Parser(text).parse());
}

SqlQuery to_concrete(const ParameterizedSql& tmpl) {
  auto refs = list_placeholders(tmpl);
  if (!refs.empty()) {
    std::string msg = "unresolved placeholders:";
    for (const auto& r : refs)
      msg += " [" + r.placeholder.element + "]@[" + r.placeholder.tag + "]";
    throw SqlParseError(msg, 0, "");
  }
  SqlQuery q;
  for (const auto& item : tmpl.agg_items)
    q.agg_items.push_back({item.op, item.distinct, std::get<QualifiedColumn>(item.column)});
  q.primary_table = std::get<std::string>(tmpl.primary_table);
  for (const auto& join : tmpl.joins)
    q.joins.push_back({std::get<std::string>(join.table), join.left_key, join.right_key});
  for (const auto& cond : tmpl.conditions)
    q.conditions.push_back({std::get<QualifiedColumn>(cond.column), cond.op,
                            std::get<Literal>(cond.value)});
  q.connectives = tmpl.connectives;
  q.groups = tmpl.groups;
  return q;
}

ParameterizedSql to_template(const SqlQuery& query) {
  ParameterizedSql t;
  for (const auto& item : query.agg_items)
    t.agg_items.push_back({item.op, item.distinct, ColumnSlot(item.column)});
  t.primary_table = query.primary_table;
  for (const auto& join : query.joins)
    t.joins.push_back({TableSlot(join.table), join.left_key, join.right_key});
  for (const auto& cond : query.conditions)
    t.conditions.push_back({ColumnSlot(cond.column), cond.op, ValueSlot(cond.value)});
  t.connectives = query.connectives;
  t.groups = query.groups;
  return t;
}

std::string render(const ParameterizedSql& tmpl) {
  std::ostringstream out;
  out << "SELECT ";
  for (std::size_t i = 0; i < tmpl.agg_items.size(); ++i) {
    if (i) out << " , ";
    const auto& item = tmpl.agg_items[i];
    if (item.op == AggOp::None) {
      if (item.distinct) out << "DISTINCT ";
      out << render_column_slot(item.column);
    } else {
      out << agg_op_name(item.op) << " ( ";
      if (item.distinct) out << "DISTINCT ";
      out << render_column_slot(item.column) << " )";
    }
  }
  out << " FROM " << render_table_slot(tmpl.primary_table);
  for (const auto& join : tmpl.joins) {
    out << " INNER JOIN " << render_table_slot(join.table) << " ON "
        << join.left_key.table << "." << join.left_key.column << " = "
        << join.right_key.table << "." << join.right_key.column;
  }
  if (!tmpl.conditions.empty()) {
    out << " WHERE ";
    std::size_t g = 0;
    for (std::size_t i = 0; i < tmpl.conditions.size(); ++i) {
      if (i) out << " " << (tmpl.connectives[i - 1] == Connective::And ? "AND" : "OR")
                 << " ";
      if (g < tmpl.groups.size() && tmpl.groups[g].begin == i) out << "( ";
      const auto& c = tmpl.conditions[i];
      out << render_column_slot(c.column) << " " << con_op_text(c.op) << " "
          << render_value_slot(c.value);
      if (g < tmpl.groups.size() && tmpl.groups[g].end == i + 1) {
        out << " )";
        ++g;
      }
    }
  }
  return out.str();
}

std::string render(const SqlQuery& query) { return render(to_template(query)); }

namespace {

std::string column_key(const QualifiedColumn& qc) {
  if (qc.table.empty()) return to_upper(qc.column);
  return to_upper(qc.table) + "." + to_upper(qc.column);
}

std::string literal_key(const Literal& lit) {
  switch (lit.kind) {
    case Literal::Kind::Text: return "s:" + lit.text;
    case Literal::Kind::Number: return "n:" + lit.text;
    case Literal::Kind::Mask:
      return "m:" + lit.mask_tag + "#" + std::to_string(lit.mask_index);
  }
  return "";
}

std::string agg_key(const AggItem& item) {
  return std::string(agg_op_name(item.op)) + (item.distinct ? "|D|" : "|-|") +
         column_key(item.column);
}

std::string condition_key(const Condition& c) {
  return column_key(c.column) + " " + con_op_text(c.op) + " " + literal_key(c.value);
}

std::string join_key(const Join& j) {
  std::string a = column_key(j.left_key), b = column_key(j.right_key);
  if (b < a) std::swap(a, b);
  return to_upper(j.table) + "|" + a + "=" + b;
}

// One WHERE unit: a single condition or a parenthesized group.
struct WhereUnit {
  bool is_group = false;
  std::size_t begin = 0, end = 0;  // condition index range
};

std::vector<WhereUnit> where_units(const SqlQuery& q) {
  std::vector<WhereUnit> units;
  std::size_t g = 0, i = 0;
  while (i < q.conditions.size()) {
    if (g < q.groups.size() && q.groups[g].begin == i) {
      units.push_back({true, q.groups[g].begin, q.groups[g].end});
      i = q.groups[g].end;
      ++g;
    } else {
      units.push_back({false, i, i + 1});
      ++i;
    }
  }
  return units;
}

// Connective index j sits between conditions j and j+1; it is top-level when
// it is not strictly inside a group span.
bool connective_is_top_level(const SqlQuery& q, std::size_t j) {
  for (const auto& g : q.groups)
    if (j >= g.begin && j + 1 < g.end) return false;
  return true;
}

std::string unit_key(const SqlQuery& q, const WhereUnit& u, bool canonical) {
  if (!u.is_group) return condition_key(q.conditions[u.begin]);
  bool uniform = true;
  std::optional<Connective> kind;
  for (std::size_t j = u.begin; j + 1 < u.end; ++j) {
    if (!kind) kind = q.connectives[j];
    if (q.connectives[j] != *kind) uniform = false;
  }
  std::vector<std::string> keys;
  for (std::size_t i = u.begin; i < u.end; ++i)
    keys.push_back(condition_key(q.conditions[i]));
  if (canonical && uniform) std::sort(keys.begin(), keys.end());
  std::string out = "G{";
  out += (kind && *kind == Connective::Or) ? "OR:" : "AND:";
  for (const auto& k : keys) out += k + ";";
  out += "}";
  return out;
}

bool where_equal(const SqlQuery& a, const SqlQuery& b, bool canonical) {
  auto ua = where_units(a), ub = where_units(b);
  if (ua.size() != ub.size()) return false;
  std::vector<std::string> ka, kb;
  std::vector<int> ca, cb;  // top-level connectives as ints
  for (const auto& u : ua) ka.push_back(unit_key(a, u, canonical));
  for (const auto& u : ub) kb.push_back(unit_key(b, u, canonical));
  for (std::size_t j = 0; j + 1 < a.conditions.size(); ++j)
    if (connective_is_top_level(a, j)) ca.push_back(static_cast<int>(a.connectives[j]));
  for (std::size_t j = 0; j + 1 < b.conditions.size(); ++j)
    if (connective_is_top_level(b, j)) cb.push_back(static_cast<int>(b.connectives[j]));
  if (ca != cb) {
    // Mixed or differing chains must match exactly; a uniform chain of one
    // kind can only equal another uniform chain of the same kind and length.
    return false;
  }
  if (canonical) {
    bool uniform = std::adjacent_find(ca.begin(), ca.end(), std::not_equal_to<>()) ==
                   ca.end();
    if (uniform) {
      std::sort(ka.begin(), ka.end());
      std::sort(kb.begin(), kb.end());
    }
  }
  return ka == kb;
}

bool common_equal(const SqlQuery& a, const SqlQuery& b, bool canonical) {
  if (a.agg_items.size() != b.agg_items.size()) return false;
  for (std::size_t i = 0; i < a.agg_items.size(); ++i)
    if (agg_key(a.agg_items[i]) != agg_key(b.agg_items[i])) return false;
  if (!iequals(a.primary_table, b.primary_table)) return false;
  if (a.joins.size() != b.joins.size()) return false;
  for (std::size_t i = 0; i < a.joins.size(); ++i)
    if (join_key(a.joins[i]) != join_key(b.joins[i])) return false;
  return where_equal(a, b, canonical);
}

}  // namespace

bool tree_equal(const SqlQuery& a, const SqlQuery& b) {
  return common_equal(a, b, /*canonical=*/false);
}

bool canonical_equal(const SqlQuery& a, const SqlQuery& b) {
  return common_equal(a, b, /*canonical=*/true);
}

ClauseDecomposition decompose(const SqlQuery& query) {
  ClauseDecomposition d;
  std::set<std::string> ops, cols, tabs;
  for (const auto& item : query.agg_items) {
    ops.insert(agg_op_name(item.op));
    cols.insert(column_key(item.column));
  }
  for (const auto& t : query.tables()) tabs.insert(to_upper(t));
  d.agg_ops.assign(ops.begin(), ops.end());
  d.agg_columns.assign(cols.begin(), cols.end());
  d.tables.assign(tabs.begin(), tabs.end());
  for (const auto& c : query.conditions) {
    d.con_col_ops.push_back(column_key(c.column) + " " + con_op_text(c.op));
    d.con_values.push_back(literal_key(c.value));
  }
  std::sort(d.con_col_ops.begin(), d.con_col_ops.end());
  std::sort(d.con_values.begin(), d.con_values.end());
  return d;
}

MaskResult mask_sql(const SqlQuery& query, const std::vector<SpanValue>& spans) {
  MaskResult result;
  result.masked = query;
  std::map<std::string, int> tag_counts;
  std::vector<bool> taken(query.conditions.size(), false);
  for (const auto& span : spans) {
    const int n = ++tag_counts[span.category];
    auto matches = [&](const Condition& c, bool exact) {
      if (c.value.kind == Literal::Kind::Mask) return false;
      return exact ? c.value.text == span.text : iequals(c.value.text, span.text);
    };
    std::size_t found = query.conditions.size();
    for (std::size_t i = 0; i < query.conditions.size() && found == query.conditions.size();
         ++i)
      if (!taken[i] && matches(result.masked.conditions[i], /*exact=*/true)) found = i;
    for (std::size_t i = 0; i < query.conditions.size() && found == query.conditions.size();
         ++i)
      if (!taken[i] && matches(result.masked.conditions[i], /*exact=*/false)) found = i;
    if (found == query.conditions.size()) {
      ++result.unmatched;
      continue;
    }
    taken[found] = true;
    Literal& lit = result.masked.conditions[found].value;
    lit.kind = Literal::Kind::Mask;
    lit.text.clear();
    lit.mask_tag = span.category;
    lit.mask_index = n;
  }
  result.text = render(result.masked);
  return result;
}

std::vector<PlaceholderRef> list_placeholders(const ParameterizedSql& tmpl) {
  std::vector<PlaceholderRef> out;
  int ordinal = 0;
  auto visit_column = [&](const ColumnSlot& slot) {
    if (const auto* ph = std::get_if<Placeholder>(&slot))
      out.push_back({ordinal, *ph});
    ++ordinal;
  };
  for (const auto& item : tmpl.agg_items) visit_column(item.column);
  if (const auto* ph = std::get_if<Placeholder>(&tmpl.primary_table))
    out.push_back({ordinal, *ph});
  ++ordinal;
  for (const auto& join : tmpl.joins) {
    if (const auto* ph = std::get_if<Placeholder>(&join.table))
      out.push_back({ordinal, *ph});
    ++ordinal;
  }
  for (const auto& cond : tmpl.conditions) {
    visit_column(cond.column);
    if (const auto* ph = std::get_if<Placeholder>(&cond.value))
      out.push_back({ordinal, *ph});
    ++ordinal;
  }
  return out;
}

namespace {

// Parses a column-slot placeholder element like T."C", T.C, "C", or C.
QualifiedColumn parse_column_element(const std::string& element) {
  try {
    ParameterizedSql q = parse_template("SELECT " + element + " FROM X_");
    if (q.agg_items.size() == 1)
      if (const auto* qc = std::get_if<QualifiedColumn>(&q.agg_items[0].column))
        if (q.agg_items[0].op == AggOp::None && !q.agg_items[0].distinct) return *qc;
  } catch (const SqlParseError&) {
  }
  throw PipelineError("cannot interpret '" + element + "' as a column reference");
}

[[noreturn]] void schema_fail(const std::string& what) {
  throw PipelineError("schema validation failed: " + what);
}

void validate_against_schema(const SqlQuery& q, const SchemaDescriptor& schema) {
  for (const auto& t : q.tables())
    if (!schema.find_table(t)) schema_fail("unknown table " + to_upper(t));
  auto check_column = [&](const QualifiedColumn& qc) {
    if (qc.table.empty()) {
      if (!schema.has_column_anywhere(qc.column))
        schema_fail("unknown column " + to_upper(qc.column));
      return;
    }
    bool in_query = false;
    for (const auto& t : q.tables())
      if (iequals(t, qc.table)) in_query = true;
    if (!in_query)
      schema_fail("column " + column_key(qc) + " references a table absent from the query");
    if (!schema.find_column(qc.table, qc.column))
      schema_fail("unknown column " + column_key(qc));
  };
  for (const auto& item : q.agg_items) check_column(item.column);
  for (const auto& join : q.joins) {
    check_column(join.left_key);
    check_column(join.right_key);
  }
  for (const auto& cond : q.conditions) check_column(cond.column);
}

bool parses_as_number(const std::string& s) {
  if (s.empty()) return false;
  std::size_t i = s[0] == '-' ? 1 : 0;
  if (i == s.size()) return false;
  bool dot = false, digit = false;
  for (; i < s.size(); ++i) {
    if (s[i] == '.' && !dot) {
      dot = true;
    } else if (s[i] >= '0' && s[i] <= '9') {
      digit = true;
    } else {
      return false;
    }
  }
  return digit;
}

}  // namespace

SqlQuery substitute(const ParameterizedSql& tmpl, const BindingMap& bindings,
                    const SchemaDescriptor& schema) {
  ParameterizedSql resolved = tmpl;
  int ordinal = 0;

  auto binding_for = [&](int ord, const Placeholder& ph) -> const Binding& {
    auto it = bindings.find(ord);
    if (it == bindings.end())
      throw PipelineError("missing binding for placeholder #" + std::to_string(ord) +
                          " [" + ph.element + "]@[" + ph.tag + "]");
    return it->second;
  };

  auto resolve_column = [&](ColumnSlot& slot) {
    if (const auto* ph = std::get_if<Placeholder>(&slot)) {
      const Binding& b = binding_for(ordinal, *ph);
      QualifiedColumn qc;
      if (b.column) {
        qc.column = *b.column;
        if (b.table) qc.table = *b.table;
      } else {
        qc = parse_column_element(!b.value.empty() ? b.value : ph->element);
      }
      slot = qc;
    }
    ++ordinal;
  };

  for (auto& item : resolved.agg_items) resolve_column(item.column);
  if (const auto* ph = std::get_if<Placeholder>(&resolved.primary_table)) {
    const Binding& b = binding_for(ordinal, *ph);
    resolved.primary_table = b.table ? *b.table : (!b.value.empty() ? b.value : ph->element);
  }
  ++ordinal;
  for (auto& join : resolved.joins) {
    if (const auto* ph = std::get_if<Placeholder>(&join.table)) {
      const Binding& b = binding_for(ordinal, *ph);
      join.table = b.table ? *b.table : (!b.value.empty() ? b.value : ph->element);
    }
    ++ordinal;
  }
  for (auto& cond : resolved.conditions) {
    resolve_column(cond.column);
    if (const auto* ph = std::get_if<Placeholder>(&cond.value)) {
      const Binding& b = binding_for(ordinal, *ph);
      // A discovered cell may rebind the condition column to where the value
      // actually lives. When the discovered location agrees with the drafted
      // column, the draft's spelling is kept (a bare column stays bare).
      if (b.table && b.column) {
        if (!std::holds_alternative<QualifiedColumn>(cond.column))
          throw PipelineError("value binding rebinds a still-unresolved column");
        const auto& drafted = std::get<QualifiedColumn>(cond.column);
        bool agrees = iequals(drafted.column, *b.column) &&
                      (drafted.table.empty() || iequals(drafted.table, *b.table));
        if (!agrees) cond.column = QualifiedColumn{*b.table, *b.column};
      }
      Literal lit;
      const QualifiedColumn& qc = std::get<QualifiedColumn>(cond.column);
      const ColumnDesc* col = nullptr;
      if (!qc.table.empty()) {
        col = schema.find_column(qc.table, qc.column);
      } else {
        for (const auto& table : schema.tables)
          if (const ColumnDesc* found = schema.find_column(table.name, qc.column)) {
            col = found;
            break;
          }
      }
      bool numeric_column = col && col->kind != ColumnKind::Text;
      if (numeric_column && parses_as_number(b.value)) {
        lit.kind = Literal::Kind::Number;
      } else {
        lit.kind = Literal::Kind::Text;
      }
      lit.text = b.value;
      cond.value = lit;
    }
    ++ordinal;
  }

  SqlQuery query = to_concrete(resolved);
  validate_against_schema(query, schema);
  return query;
}

}  // namespace cbrsql::sql
