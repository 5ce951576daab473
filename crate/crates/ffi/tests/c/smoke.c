#include <math.h>
#include <stdio.h>
#include <string.h>

#include "gridloop.h"

static const char *SCENARIO =
    "schema_version = 1\n"
    "name = \"c-smoke\"\n"
    "seed = 3\n"
    "duration = 0.1\n";

int main(void) {
    GlSimulation *sim = NULL;
    if (gl_simulation_new(SCENARIO, &sim) != GL_STATUS_OK) return 1;
    uint64_t n = 0;
    if (gl_simulation_step(sim, 1000, &n) != GL_STATUS_OK || n != 100) return 2;
    GlFrame f;
    if (gl_simulation_latest_frame(sim, &f) != GL_STATUS_OK) return 3;
    if (fabs(f.timestamp - 0.099) > 1e-9 || f.switch_count != 5 || f.closed_mask != 0x1F) return 4;
    char digest[65];
    if (gl_simulation_digest(sim, digest, sizeof digest) != GL_STATUS_OK || strlen(digest) != 64) return 5;
    if (gl_simulation_step(sim, 1, &n) != GL_STATUS_FINISHED) return 6;
    gl_simulation_free(sim);

    GlReading r[2] = {{0x01, 230.0}, {0x05, 50.0}};
    uint8_t buf[64];
    size_t written = 0, consumed = 0;
    if (gl_meter_encode(3, 9, r, 2, buf, sizeof buf, &written) != GL_STATUS_OK) return 7;
    GlMeterHeader h;
    GlRegister regs[4];
    if (gl_meter_decode(buf, written, &h, regs, 4, &consumed) != GL_STATUS_OK) return 8;
    if (consumed != written || h.register_count != 2 || fabs(regs[0].value - 230.0) > 0.1) return 9;
    buf[5] ^= 0x10;
    if (gl_meter_decode(buf, written, &h, regs, 4, &consumed) != GL_STATUS_FRAME_ERROR) return 10;
    char msg[256];
    if (gl_last_error_message(msg, sizeof msg) == 0) return 11;
    printf("%s %s\n", gl_version(), digest);
    return 0;
}
