#ifndef VIZATTACK_H
#define VIZATTACK_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes returned by every fallible call. */
#define VZA_OK 0
#define VZA_ERR_NULL 1
#define VZA_ERR_UTF8 2
#define VZA_ERR_IO 3
#define VZA_ERR_SHAPE 4
#define VZA_ERR_CONFIG 5
#define VZA_ERR_ATTACK_FAILED 6
#define VZA_ERR_MODEL 7
#define VZA_ERR_INTERNAL 8
#define VZA_ERR_PANIC 9

/* Stages for vza_run_experiment. */
#define VZA_STAGE_TRAIN_DR 0
#define VZA_STAGE_FIT_SUBSTITUTE 1
#define VZA_STAGE_TRAIN_REC 2
#define VZA_STAGE_ATTACK 3

/* Chart types reported by vza_recommend_csv. */
#define VZA_CHART_SCATTER 0
#define VZA_CHART_LINE 1
#define VZA_CHART_BAR 2
#define VZA_CHART_AREA 3
#define VZA_CHART_PIE 4

typedef struct VzaProjector VzaProjector;
typedef struct VzaRecommender VzaRecommender;

const char *vza_version(void);

/* Copies the calling thread's last error into buf (always NUL-terminated when
 * len > 0). Returns the full message length, 0 when there is no error. */
size_t vza_last_error(char *buf, size_t len);

int32_t vza_projector_load(const char *path, VzaProjector **out);
size_t vza_projector_width(const VzaProjector *p);
/* row holds len raw-unit values; out_xy receives 2 coordinates. */
int32_t vza_projector_project(const VzaProjector *p, const double *row, size_t len, double *out_xy);
void vza_projector_free(VzaProjector *p);

int32_t vza_recommender_load(const char *path, VzaRecommender **out);
/* json may be NULL; otherwise it receives a string for vza_string_free. */
int32_t vza_recommend_csv(const VzaRecommender *m, const char *csv_path, size_t top_k, int32_t *chart, char **json);
void vza_recommender_free(VzaRecommender *m);

void vza_string_free(char *s);

/* out_dir may be NULL. exit_status receives the CLI exit code of the run. */
int32_t vza_run_experiment(const char *config_path, int32_t stage, const char *out_dir, int32_t *exit_status);

#ifdef __cplusplus
}
#endif

#endif
