/* Physiological interactive fiction engine: C interface.
 *
 * Every function returns a pif_status. On failure the message is available
 * from pif_last_error() on the same thread until the next call. Strings
 * returned through `char **` parameters are owned by the caller and released
 * with pif_free(). Handles are released with their matching *_free().
 */
#ifndef PIF_PIF_H
#define PIF_PIF_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PIF_API __declspec(dllexport)
#else
#define PIF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pif_status {
    PIF_OK = 0,
    PIF_ERR_INVALID_ARGUMENT = 1,
    PIF_ERR_VALIDATION = 2,
    PIF_ERR_IO = 3,
    PIF_ERR_CORRUPT = 4,
    PIF_ERR_TIMEOUT = 5,
    PIF_ERR_STATE = 6,
    PIF_ERR_NETWORK = 7,
    PIF_ERR_RUNTIME = 8
} pif_status;

PIF_API const char *pif_version(void);
PIF_API const char *pif_last_error(void);
PIF_API const char *pif_status_name(pif_status s);
PIF_API void pif_free(void *p);

/* Stories ------------------------------------------------------------------ */

typedef struct pif_story pif_story;

/* Parses and lints. `report_json` receives an array of
 * {severity, line, column, message, text} with `text` in
 * `origin:line:col: severity: message` form. Returns PIF_ERR_VALIDATION when
 * any diagnostic is an error; `out` (optional) is set only on success. */
PIF_API pif_status pif_story_parse(const char *text, const char *origin, pif_story **out, char **report_json);
PIF_API pif_status pif_story_load(const char *path, pif_story **out, char **report_json);
PIF_API pif_status pif_story_print(const pif_story *s, char **text);
PIF_API void pif_story_free(pif_story *s);

/* Headless play ------------------------------------------------------------ */

typedef struct pif_play pif_play;

/* policy: "neuroadaptive", "biofeedback", "empowering" or "covert" (needs
 * allow_covert). `initial_state_json` (optional, e.g. {"arousal":0.8}) is in
 * effect before the first page is shown. */
PIF_API pif_status pif_play_start(const pif_story *s, const char *policy, int allow_covert,
                                  const char *initial_state_json, pif_play **out);
/* Current page as a reader-protocol `page` message, or an `end` message. */
PIF_API pif_status pif_play_page(pif_play *p, char **message_json);
PIF_API pif_status pif_play_advance(pif_play *p);
PIF_API pif_status pif_play_choose(pif_play *p, size_t index);
/* Applies a state update, e.g. {"arousal":0.8}. */
PIF_API pif_status pif_play_state(pif_play *p, double t, const char *values_json);
PIF_API int pif_play_finished(const pif_play *p);
/* Engine events as an array of strings; variables as an object. */
PIF_API pif_status pif_play_events(pif_play *p, char **events_json);
PIF_API pif_status pif_play_variables(pif_play *p, char **variables_json);
PIF_API void pif_play_free(pif_play *p);

/* Simulation ---------------------------------------------------------------- */

/* The paired-story scenario at the given separability, as JSON. */
PIF_API pif_status pif_scenario_default(double separability, char **scenario_json);
/* Writes one simulated subject to `out_path`. NULL scenario_json = default. */
PIF_API pif_status pif_simulate(const char *scenario_json, const char *subject, uint64_t seed, const char *out_path);
/* Simulates `n_subjects` and returns the feature table (CSV). */
PIF_API pif_status pif_cohort(const char *scenario_json, int n_subjects, uint64_t seed, char **feature_csv);

/* Features and models ------------------------------------------------------ */

/* Feature table (CSV) for the story windows of each recording. */
PIF_API pif_status pif_features(const char *const *recording_paths, size_t n, char **feature_csv);

/* LOSO evaluation and a final fit. NULL class names take the construct's
 * defaults. `report_json` = {accuracy, per_subject[], weights{}, warnings[]}.
 * `loso_csv` and `weights_csv` are optional. */
PIF_API pif_status pif_train(const char *feature_csv, const char *construct, const char *class_a,
                             const char *class_b, char **model_json, char **report_json, char **loso_csv,
                             char **weights_csv);

typedef struct pif_classifier pif_classifier;

PIF_API pif_status pif_classifier_open(const char *model_json, pif_classifier **out);
/* Feeds a chunk of a .pifrec stream. Each completed story window produces a
 * JSON line {story, t0, t1, label, posterior_a, truth?} in `labels_jsonl`
 * (empty string when none completed). */
PIF_API pif_status pif_classifier_feed(pif_classifier *c, const char *data, size_t len, char **labels_jsonl);
/* End of input: flushes windows left open. */
PIF_API pif_status pif_classifier_finish(pif_classifier *c, char **labels_jsonl);
PIF_API void pif_classifier_free(pif_classifier *c);

/* Transport ------------------------------------------------------------------ */

typedef void (*pif_line_fn)(const char *line, size_t len, void *user);

/* Replays a recording through the transport layer and re-records what an
 * inlet receives, delivering .pifrec lines in order. speed: "realtime" or
 * "max". */
PIF_API pif_status pif_replay(const char *path, const char *speed, pif_line_fn sink, void *user);
/* Replays a recording onto a network hub at host:port. Waits `wait_s`
 * seconds before the first sample so that consumers can subscribe. */
PIF_API pif_status pif_replay_serve(const char *path, const char *speed, const char *host, uint16_t port,
                                    double wait_s);

typedef struct pif_recorder pif_recorder;

/* Records every stream announced by the hub at host:port (or only those
 * named in the comma-separated `streams`) into `out_path`. */
PIF_API pif_status pif_recorder_open(const char *host, uint16_t port, const char *streams, const char *out_path,
                                     pif_recorder **out);
/* Stops, flushes and returns {streams:[{id, samples, overflow}], samples}. */
PIF_API pif_status pif_recorder_stop(pif_recorder *r, char **summary_json);
PIF_API void pif_recorder_free(pif_recorder *r);

/* Session service -------------------------------------------------------------- */

typedef struct pif_service pif_service;

/* Config is JSON; relative paths resolve against `base_dir`. */
PIF_API pif_status pif_service_open(const char *config_json, const char *base_dir, pif_service **out);
PIF_API uint16_t pif_service_port(const pif_service *s);
PIF_API int pif_service_finished(const pif_service *s);
PIF_API pif_status pif_service_stop(pif_service *s);
PIF_API void pif_service_free(pif_service *s);

#ifdef __cplusplus
}
#endif

#endif
