/* Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
 * See LICENSE in the project root.
 *
 * C interface of the cbrsql shared library. Every function returns a status
 * code; on failure cbrsql_last_error() carries a one-line message for the
 * calling thread. Strings returned through out-parameters are heap buffers
 * owned by the caller and released with cbrsql_free().
 */
#ifndef CBRSQL_CBRSQL_H
#define CBRSQL_CBRSQL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(CBRSQL_BUILDING_SHARED)
#define CBRSQL_API __declspec(dllexport)
#else
#define CBRSQL_API __declspec(dllimport)
#endif
#else
#define CBRSQL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cbrsql_status {
  CBRSQL_OK = 0,
  CBRSQL_ERROR_CONFIG = 1,    /* bad configuration or arguments */
  CBRSQL_ERROR_IO = 2,        /* missing or unreadable files/artifacts */
  CBRSQL_ERROR_PARSE = 3,     /* SQL text rejected by the dialect grammar */
  CBRSQL_ERROR_SERVICE = 4,   /* chat/embedding backend failure */
  CBRSQL_ERROR_PIPELINE = 5,  /* pipeline stage failure */
  CBRSQL_ERROR_EVAL = 6,      /* evaluation failure (e.g. bad gold query) */
  CBRSQL_ERROR_INTERNAL = 7   /* anything else */
} cbrsql_status;

/* Opaque handle owning services, datasets and index snapshots. */
typedef struct cbrsql_engine cbrsql_engine;

/* Message of the last failure on this thread; never NULL. */
CBRSQL_API const char* cbrsql_last_error(void);

/* Releases a buffer returned by this library. NULL is a no-op. */
CBRSQL_API void cbrsql_free(char* buffer);

/* Creates an engine from a JSON config file. overrides is an optional array
 * of override_count strings of the form "dotted.key=value" applied on top of
 * the file before parsing. */
CBRSQL_API cbrsql_status cbrsql_engine_create(const char* config_path,
                                              const char* const* overrides,
                                              size_t override_count,
                                              cbrsql_engine** out_engine);
CBRSQL_API void cbrsql_engine_destroy(cbrsql_engine* engine);

/* Effective configuration as JSON (paths resolved, overrides applied). */
CBRSQL_API cbrsql_status cbrsql_engine_config(cbrsql_engine* engine,
                                              char** out_json);

/* Offline stages. Each writes artifacts under the configured out_dir and
 * returns a JSON summary. */
CBRSQL_API cbrsql_status cbrsql_retain(cbrsql_engine* engine, char** out_json);
CBRSQL_API cbrsql_status cbrsql_build_lookup(cbrsql_engine* engine,
                                             char** out_json);
CBRSQL_API cbrsql_status cbrsql_build_idb(cbrsql_engine* engine,
                                          char** out_json);

/* Answers one question. pipeline is "cbr" or "rag"; k <= 0 keeps the
 * configured retrieval depth; trace_path may be NULL or empty. */
CBRSQL_API cbrsql_status cbrsql_query(cbrsql_engine* engine,
                                      const char* question,
                                      const char* pipeline, int k,
                                      const char* trace_path, char** out_json);

/* Scores "cbr", "rag" or "both" (NULL means both) on the configured
 * evaluation dataset; writes report.json/report.txt/traces.jsonl. */
CBRSQL_API cbrsql_status cbrsql_eval(cbrsql_engine* engine,
                                     const char* pipeline, char** out_json);

/* Dropout-perturbation comparison for one pipeline. p_top and seed override
 * the configured dropout policy when non-NULL. */
CBRSQL_API cbrsql_status cbrsql_brittleness(cbrsql_engine* engine,
                                            const char* pipeline,
                                            const double* p_top,
                                            const uint64_t* seed,
                                            char** out_json);

/* Entity-tag histogram over the corpus questions. */
CBRSQL_API cbrsql_status cbrsql_tag_stats(cbrsql_engine* engine,
                                          char** out_json);

/* Writes the self-contained synthetic bundle (database dump, schema, corpus,
 * held-out sets, gazetteer, lookup map, config.json) into dir. */
CBRSQL_API cbrsql_status cbrsql_write_fixture(const char* dir,
                                              char** out_json);

/* Parses a query in the supported dialect and returns its canonical text. */
CBRSQL_API cbrsql_status cbrsql_parse_canonical(const char* sql_text,
                                                char** out_canonical);

/* Unit-cost edit distance; case_insensitive != 0 lowercases first. */
CBRSQL_API cbrsql_status cbrsql_levenshtein(const char* a, const char* b,
                                            int case_insensitive,
                                            size_t* out_distance);

/* Rank-weighted dropout probabilities p_1..p_k written to out_probs. */
CBRSQL_API cbrsql_status cbrsql_rank_dropout_probs(int k, double p_top,
                                                   double* out_probs);

#ifdef __cplusplus
}
#endif

#endif /* CBRSQL_CBRSQL_H */
