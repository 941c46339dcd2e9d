#ifndef SONDE_FFI_H
#define SONDE_FFI_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Quantity binned by a neighbor graph.
 */
typedef enum SondeQuantity {
  SONDE_QUANTITY_DISTANCE = 0,
  SONDE_QUANTITY_TEMPERATURE = 1,
  SONDE_QUANTITY_HUMIDITY = 2,
  SONDE_QUANTITY_VELOCITY = 3,
} SondeQuantity;

/**
 * Result code of every fallible call.
 */
typedef enum SondeStatus {
  SONDE_STATUS_OK = 0,
  SONDE_STATUS_NULL_POINTER = 1,
  SONDE_STATUS_INVALID_ARGUMENT = 2,
  SONDE_STATUS_OUT_OF_RANGE = 3,
  SONDE_STATUS_CANNOT_FLOAT = 4,
  SONDE_STATUS_WRONG_LENGTH = 5,
  SONDE_STATUS_CRC_MISMATCH = 6,
  SONDE_STATUS_UNKNOWN_VERSION = 7,
  SONDE_STATUS_TOO_FEW_SONDES = 8,
  SONDE_STATUS_NOT_POSITIVE_DEFINITE = 9,
  SONDE_STATUS_BUFFER_TOO_SMALL = 10,
  SONDE_STATUS_PANIC = 11,
} SondeStatus;

/**
 * Opaque orientation filter.
 */
typedef struct SondeAhrs SondeAhrs;

/**
 * Opaque position/velocity Kalman filter.
 */
typedef struct SondeNavFilter SondeNavFilter;

/**
 * Opaque distance-neighbor graph.
 */
typedef struct SondeQGraph SondeQGraph;

typedef struct SondeAtmosphere {
  /**
   * m
   */
  double altitude;
  /**
   * Pa
   */
  double pressure;
  /**
   * K
   */
  double temperature;
  /**
   * kg/m3
   */
  double density;
} SondeAtmosphere;

typedef struct SondeBalloonSpec {
  /**
   * m
   */
  double radius;
  /**
   * m
   */
  double sheet_thickness;
  /**
   * kg/m3
   */
  double material_density;
  /**
   * kg/mol
   */
  double gas_molar_mass;
  /**
   * kg/mol
   */
  double air_molar_mass;
  /**
   * kg
   */
  double payload_mass;
} SondeBalloonSpec;

/**
 * One instrument record in packet units.
 */
typedef struct SondeSample {
  uint8_t sonde_id;
  /**
   * GNSS time of week, s
   */
  double time;
  /**
   * Pa
   */
  double pressure;
  /**
   * K
   */
  double temperature;
  /**
   * %RH
   */
  double humidity;
  double lon;
  double lat;
  /**
   * m
   */
  double altitude;
  /**
   * north, east, down; m/s
   */
  double vel_ned[3];
  /**
   * g
   */
  double accel_body[3];
  /**
   * gauss
   */
  double mag_body[3];
  /**
   * w, x, y, z
   */
  double orientation[4];
} SondeSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code. Never null.
 */
const char *sonde_status_message(enum SondeStatus status);

/**
 * Detail of the last failure on this thread. Valid until the next failing
 * call on the same thread; empty when nothing failed yet.
 */
const char *sonde_last_error(void);

enum SondeStatus sonde_isa_sample(double altitude, struct SondeAtmosphere *out);

enum SondeStatus sonde_isa_altitude_for_density(double density, double *out_altitude);

/**
 * Current prototype sphere: R 0.20 m, 20 µm sheet, 17.5 g payload, helium.
 */
enum SondeStatus sonde_balloon_default(struct SondeBalloonSpec *out);

/**
 * Skin mass, kg.
 */
enum SondeStatus sonde_balloon_mass(const struct SondeBalloonSpec *spec, double *out_kg);

/**
 * Floating altitude, m.
 */
enum SondeStatus sonde_attainable_altitude(const struct SondeBalloonSpec *spec, double *out_m);

/**
 * Squared Brunt-Väisälä frequency from a temperature step, s^-2.
 */
double sonde_bv_n2(double delta_t, double delta_z, double t0);

/**
 * Encode into `out`, which must hold at least 64 bytes.
 */
enum SondeStatus sonde_encode(const struct SondeSample *sample,
                              uint16_t seq,
                              uint8_t *out,
                              size_t out_len);

enum SondeStatus sonde_decode(const uint8_t *bytes,
                              size_t len,
                              struct SondeSample *out_sample,
                              uint16_t *out_seq);

/**
 * Graph of 3-D separations. `positions` holds `n` packed `[e, n, u]`
 * triples; non-finite entries are excluded.
 */
enum SondeStatus sonde_qgraph_from_positions(const double *positions,
                                             size_t n,
                                             double h,
                                             struct SondeQGraph **out);

/**
 * Graph of absolute reading differences for a scalar quantity.
 */
enum SondeStatus sonde_qgraph_from_scalars(const double *values,
                                           size_t n,
                                           enum SondeQuantity quantity,
                                           double h,
                                           struct SondeQGraph **out);

/**
 * Number of bins; 0 for a null handle.
 */
size_t sonde_qgraph_bins(const struct SondeQGraph *graph);

/**
 * Sondes taking part in the graph.
 */
size_t sonde_qgraph_sondes(const struct SondeQGraph *graph);

/**
 * Copy Q into `out[0..len]`. `len` must be at least the bin count.
 */
enum SondeStatus sonde_qgraph_values(const struct SondeQGraph *graph, double *out, size_t len);

void sonde_qgraph_free(struct SondeQGraph *graph);

/**
 * Filter starting at the identity orientation.
 */
enum SondeStatus sonde_ahrs_new(double beta, struct SondeAhrs **out);

/**
 * One filter step. `gyro` rad/s, `accel` g, `mag` gauss, 3 values each.
 * `out_quat` (optional) receives w, x, y, z; `out_gyro_only` (optional) is
 * set to 1 when the accelerometer was unusable.
 */
enum SondeStatus sonde_ahrs_update(struct SondeAhrs *ahrs,
                                   const double *gyro,
                                   const double *accel,
                                   const double *mag,
                                   double dt,
                                   double *out_quat,
                                   int32_t *out_gyro_only);

/**
 * Current orientation as w, x, y, z.
 */
enum SondeStatus sonde_ahrs_orientation(const struct SondeAhrs *ahrs, double *out_quat);

void sonde_ahrs_free(struct SondeAhrs *ahrs);

/**
 * Filter initialised at a first fix (ENU m, m/s). The sigmas describe the
 * GNSS fix noise; `accel_sigma` the process noise, m/s².
 */
enum SondeStatus sonde_nav_new(const double *position,
                               const double *velocity,
                               double horizontal_sigma,
                               double vertical_sigma,
                               double speed_sigma,
                               double accel_sigma,
                               struct SondeNavFilter **out);

/**
 * Propagate with local acceleration (gravity removed, m/s²) over `dt` s.
 */
enum SondeStatus sonde_nav_predict(struct SondeNavFilter *nav, const double *accel, double dt);

/**
 * Correct with a GNSS fix.
 */
enum SondeStatus sonde_nav_update(struct SondeNavFilter *nav,
                                  const double *position,
                                  const double *velocity);

/**
 * Copy the state out. Either pointer may be null; `out_trace` receives the
 * covariance trace.
 */
enum SondeStatus sonde_nav_state(const struct SondeNavFilter *nav,
                                 double *out_position,
                                 double *out_velocity,
                                 double *out_trace);

void sonde_nav_free(struct SondeNavFilter *nav);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SONDE_FFI_H */
