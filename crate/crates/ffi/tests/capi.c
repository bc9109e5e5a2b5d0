#include <math.h>
#include <stdio.h>
#include <string.h>

#include "thermotier.h"

#define CHECK(cond)                                                    \
    do {                                                               \
        if (!(cond)) {                                                 \
            fprintf(stderr, "%s:%d: %s\n", __FILE__, __LINE__, #cond); \
            return 1;                                                  \
        }                                                              \
    } while (0)

int main(void) {
    TtTemperatureParams p = tt_temperature_params_default();
    TtTemperatureRecord r;
    CHECK(tt_record_init(0, &p, &r) == TT_STATUS_OK);
    CHECK(r.temperature == 2.0);
    CHECK(tt_record_access(&r) == TT_STATUS_OK);
    CHECK(tt_record_update(&r, p.window, &p) == TT_STATUS_OK);
    CHECK(fabs(r.temperature - (2.0 * exp(-0.1) + 16.0 / 300.0)) < 1e-12);

    CHECK(tt_record_update(&r, p.window + 1, &p) == TT_STATUS_CONTRACT);
    CHECK(tt_last_error_message() != NULL);

    unsigned char bytes[8];
    TtTemperatureRecord back;
    CHECK(tt_record_encode(&r, bytes, sizeof bytes) == TT_STATUS_OK);
    CHECK(tt_record_decode(bytes, sizeof bytes, &back) == TT_STATUS_OK);
    CHECK(back.last_query_ts == r.last_query_ts);
    CHECK(tt_record_decode(bytes, 7, &back) == TT_STATUS_ENCODING);

    double a[] = {0, 1, 2}, b[] = {0, 2}, d = -1;
    CHECK(tt_dtw_distance(a, 3, b, 2, &d) == TT_STATUS_OK);
    CHECK(d == 1.0);

    TtCounterTable *t = NULL;
    CHECK(tt_counter_table_new(1, &t) == TT_STATUS_INVALID_ARGUMENT);
    CHECK(tt_counter_table_new(3, &t) == TT_STATUS_OK);
    int64_t stream[] = {5, 5, 5, 7, 9};
    for (size_t i = 0; i < 5; i++) CHECK(tt_counter_table_process(t, stream[i]) == TT_STATUS_OK);
    uint64_t c = 0;
    CHECK(tt_counter_table_counter(t, 5, &c) == TT_STATUS_OK);
    CHECK(c >= 1 && c <= 3);
    CHECK(tt_counter_table_processed(t) == 5);
    tt_counter_table_free(t);

    CHECK(tt_dtw_distance(a, 3, b, 2, NULL) == TT_STATUS_NULL_POINTER);
    printf("ok %s\n", tt_version());
    return 0;
}
