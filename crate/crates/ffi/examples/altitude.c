/* cc -I crates/ffi/include crates/ffi/examples/altitude.c target/release/libsonde_ffi.a -lpthread -ldl -lm */
#include <stdio.h>
#include "sonde_ffi.h"

int main(void) {
    SondeBalloonSpec spec;
    double h;
    sonde_balloon_default(&spec);
    if (sonde_attainable_altitude(&spec, &h) != SONDE_STATUS_OK) {
        fprintf(stderr, "%s\n", sonde_last_error());
        return 1;
    }
    printf("floats at %.0f m\n", h);
    return 0;
}
