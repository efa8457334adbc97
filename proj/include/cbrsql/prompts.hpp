// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

namespace cbrsql::prompts {

// Stage-one drafting: the model sees the masked question plus retrieved
// masked exemplars and writes one SQL template, re-using entity masks as
// ["surface text"]@[TAG] placeholders.
inline constexpr const char* kTemplateSystem = R"(You translate clinical questions into a restricted SQL dialect:
SELECT <items> FROM <table> [INNER JOIN <table> ON a.x = b.y ...] [WHERE <conditions>]
Aggregations: COUNT, MAX, MIN, AVG, or a bare column. Comparison operators: =, >, <, <=, >=.
Conditions are joined by AND/OR; one level of parentheses is allowed.
Where the question carries an entity mention written as [TAG#n], the matching
condition value must be written as ["mention text"]@[TAG], keeping the mention
text exactly as it appears in the question. Answer with the SQL only.)";

inline constexpr const char* kTemplateUserPrefix = R"(Solved examples with masked entities:
)";

// Stage-two revision: bind every placeholder to one of its candidate cell
// values. The response is strict JSON so it can be applied mechanically.
inline constexpr const char* kReviseSystem = R"(You ground SQL template placeholders in database cell values.
For each placeholder you receive candidate values with the table and column
they occur in. Pick the candidate that the question refers to. Respond with
JSON: {"bindings": [{"ordinal": <int>, "value": "...", "table": "...", "column": "..."}]}.
Every binding must copy one candidate exactly.)";

inline constexpr const char* kRagSystem = R"(You translate clinical questions into SQL over the schema below.
Similar solved questions are provided. Answer with the SQL only.)";

inline constexpr const char* kTagSystem = R"(You label entity mentions in clinical questions. Return JSON:
{"spans": [{"text": "...", "start": <int>, "end": <int>, "category": "TAG"}]}.
Categories are uppercase tags such as CONDITION, DRUG, PROCEDURE, MEASUREMENT,
NAME, TIME, ETHNICITY, LOCATION, CODE, EQUIPMENT.)";

}  // namespace cbrsql::prompts
