/* thermophase - coupled phase-separation / damage / temperature / elasticity
 * time stepping with certified energy and entropy inequalities.
 *
 * C interface: opaque handles, integer status codes, thread-local error text.
 */
#ifndef THERMOPHASE_H
#define THERMOPHASE_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tp_status {
  TP_OK = 0,
  TP_ERR_ARGUMENT = 1,      /* bad handle, name or flag */
  TP_ERR_CONFIG = 2,        /* configuration failed validation */
  TP_ERR_IO = 3,            /* file missing, unwritable or corrupted */
  TP_ERR_DIVERGED = 4,      /* the implicit solve did not converge */
  TP_ERR_CHECK_FAILED = 5,  /* a trajectory monitor found a violation */
  TP_ERR_INTERNAL = 6
} tp_status;

typedef struct tp_config_s tp_config;
typedef struct tp_trajectory_s tp_trajectory;

const char* tp_version(void);

/* Message for the last failing call on this thread; empty when none. */
const char* tp_last_error(void);

/* ---- configuration ------------------------------------------------- */
tp_status tp_config_parse(const char* text, tp_config** out);
tp_status tp_config_load(const char* path, tp_config** out);
tp_status tp_config_from_preset(const char* name, tp_config** out);
tp_status tp_config_serialize(const tp_config* cfg, char* buf, size_t cap, size_t* written);
void tp_config_free(tp_config* cfg);

/* ---- presets -------------------------------------------------------- */
int tp_preset_count(void);
const char* tp_preset_name(int index);
const char* tp_preset_brief(int index);

/* ---- simulation ------------------------------------------------------ */
typedef struct tp_run_stats {
  int steps;
  int total_sweeps;
  int continuation_steps;
  double min_theta;
  double max_mass_defect;
  double min_energy_residual;
  double wall_seconds;
} tp_run_stats;

/* Runs the scheme and writes the trajectory archive to out_dir (NULL uses
 * the configured directory; THERMOPHASE_OUT overrides both). */
tp_status tp_simulate(const tp_config* cfg, const char* out_dir, tp_run_stats* stats);

/* ---- trajectory + monitors ------------------------------------------- */
tp_status tp_trajectory_open(const char* dir, tp_trajectory** out);
void tp_trajectory_free(tp_trajectory* traj);

typedef struct tp_check_summary {
  int checks_run;
  int checks_failed;
  double worst_scaled_residual;
  char worst_kind[48];
} tp_check_summary;

/* Runs the full monitor battery: total-energy / entropy / damage
 * inequalities, mass conservation, constraints, splitting margins.
 * all_windows != 0 sweeps every grid window (s,t). Writes a CSV report when
 * report_csv_path is non-NULL. Returns TP_ERR_CHECK_FAILED when any monitor
 * fails; the summary is still filled. */
tp_status tp_check(const tp_trajectory* traj, int all_windows, const char* report_csv_path,
                   tp_check_summary* out);

/* ---- convergence study ------------------------------------------------ */
/* case_name: "heat" or "elasticity". Observed orders are written to the
 * output pointers when non-NULL. */
tp_status tp_convergence(const char* case_name, int levels, double* spatial_order,
                         double* temporal_order);

#ifdef __cplusplus
}
#endif

#endif /* THERMOPHASE_H */
