#ifndef GRIDLOOP_H
#define GRIDLOOP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GlStatus {
  GL_STATUS_OK = 0,
  GL_STATUS_NULL_ARGUMENT = 1,
  GL_STATUS_INVALID_UTF8 = 2,
  GL_STATUS_INVALID_SCENARIO = 3,
  // An injected command was refused; the run is unchanged.
  GL_STATUS_REJECTED = 4,
  // The run has no periods left.
  GL_STATUS_FINISHED = 5,
  // The run stopped early; see the last error message.
  GL_STATUS_DIVERGED = 6,
  // No frame has been produced yet.
  GL_STATUS_NO_FRAME = 7,
  GL_STATUS_BUFFER_TOO_SMALL = 8,
  // A meter frame failed to encode or decode.
  GL_STATUS_FRAME_ERROR = 9,
  GL_STATUS_PANIC = 10,
} GlStatus;

// Opaque simulation handle.
typedef struct GlSimulation GlSimulation;

typedef struct GlGenerator {
  double terminal_voltage_rms;
  double stator_current_rms;
  double real_power;
  double reactive_power;
  double speed_rpm;
  double torque;
  double frequency;
  double phase_angle;
} GlGenerator;

typedef struct GlLoadBus {
  double voltage_rms;
  double current_rms;
  double real_power;
  double reactive_power;
  double frequency;
  double phase_angle;
} GlLoadBus;

// Flattened telemetry frame.
typedef struct GlFrame {
  double timestamp;
  struct GlGenerator generators[2];
  struct GlLoadBus load_bus;
  double field_voltage[2];
  double field_current[2];
  // Bit i set when switch i is closed, in frame order: BRK1, BRK2, then
  // the load relays in scenario order.
  uint32_t closed_mask;
  uint32_t switch_count;
} GlFrame;

// One scaled reading to put in a meter frame.
typedef struct GlReading {
  uint8_t register_id;
  double value;
} GlReading;

typedef struct GlMeterHeader {
  uint8_t device_id;
  uint8_t sequence;
  uint8_t register_count;
} GlMeterHeader;

// One decoded register. `value` is NaN for register ids with no known scale.
typedef struct GlRegister {
  uint8_t register_id;
  uint16_t raw;
  double value;
} GlRegister;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *gl_version(void);

// Copies the calling thread's last error message into `buf`.
//
// Returns the number of bytes the message needs including the NUL, or 0
// when there is none. Nothing is written if `len` is too small.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t gl_last_error_message(char *buf, size_t len);

// Parses and validates a TOML scenario and creates a run at t = 0.
//
// # Safety
// `scenario_toml` must be a NUL-terminated string; `out` must be writable.
enum GlStatus gl_simulation_new(const char *scenario_toml, struct GlSimulation **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `sim` must come from [`gl_simulation_new`] and not be used afterwards.
void gl_simulation_free(struct GlSimulation *sim);

// Advances up to `periods` control periods.
//
// `stepped` (optional) receives the number actually run. Returns
// `Finished` when the run had nothing left and `Diverged` if it stopped
// early.
//
// # Safety
// `sim` must be a live handle; `stepped` null or writable.
enum GlStatus gl_simulation_step(struct GlSimulation *sim, uint64_t periods, uint64_t *stepped);

// Time of the next control-period boundary, s. NaN for a null handle.
//
// # Safety
// `sim` must be null or a live handle.
double gl_simulation_time(const struct GlSimulation *sim);

// True once every period has run or the run stopped early.
//
// # Safety
// `sim` must be null or a live handle.
bool gl_simulation_finished(const struct GlSimulation *sim);

// Copies the most recent telemetry frame.
//
// # Safety
// `sim` must be a live handle and `out` writable.
enum GlStatus gl_simulation_latest_frame(const struct GlSimulation *sim, struct GlFrame *out);

// Writes the most recent decision-log line.
//
// # Safety
// `sim` must be a live handle; `buf` valid for `len` bytes.
enum GlStatus gl_simulation_last_decision(const struct GlSimulation *sim, char *buf, size_t len);

// Queues a JSON command for the next period boundary. Accepts the same
// command objects as the TCP service, for example
// `{"kind":"relay_set","device":"R1","state":"open"}`.
//
// # Safety
// `sim` must be a live handle; `command_json` NUL-terminated.
enum GlStatus gl_simulation_inject_json(struct GlSimulation *sim, const char *command_json);

// Writes the 64-character hex digest of the run so far; `len` must be at
// least 65.
//
// # Safety
// `sim` must be a live handle; `buf` valid for `len` bytes.
enum GlStatus gl_simulation_digest(const struct GlSimulation *sim, char *buf, size_t len);

// Encodes readings into one meter frame.
//
// # Safety
// `readings` must hold `count` items; `out` must be valid for `cap` bytes;
// `written` must be writable.
enum GlStatus gl_meter_encode(uint8_t device_id,
                              uint8_t sequence,
                              const struct GlReading *readings,
                              size_t count,
                              uint8_t *out,
                              size_t cap,
                              size_t *written);

// Decodes one meter frame from the front of `bytes`.
//
// `consumed` receives the frame length. Registers beyond `cap` are counted
// in the header but not written, and `BufferTooSmall` is returned.
//
// # Safety
// `bytes` must be valid for `len` bytes; `registers` for `cap` items;
// `header` and `consumed` writable.
enum GlStatus gl_meter_decode(const uint8_t *bytes,
                              size_t len,
                              struct GlMeterHeader *header,
                              struct GlRegister *registers,
                              size_t cap,
                              size_t *consumed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRIDLOOP_H */
