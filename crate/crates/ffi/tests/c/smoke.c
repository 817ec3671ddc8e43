#include <stdio.h>
#include <string.h>

#include "revgen.h"

#define CHECK(cond)                                              \
    do {                                                         \
        if (!(cond)) {                                           \
            fprintf(stderr, "%s:%d: %s\n", __FILE__, __LINE__, #cond); \
            return 1;                                            \
        }                                                        \
    } while (0)

int main(int argc, char **argv) {
    RevgenScore s;
    CHECK(revgen_rouge_1("the cat sat", "the cat on the mat", &s) == REVGEN_STATUS_OK);
    CHECK(s.f1 == 0.5);
    CHECK(revgen_rouge_l(NULL, "x", &s) == REVGEN_STATUS_NULL_ARGUMENT);
    CHECK(revgen_last_error() != NULL);

    double v[] = {1.0, 0.5};
    double agg = 0;
    CHECK(revgen_corpus_aggregate(v, 2, &agg) == REVGEN_STATUS_OK);
    CHECK(agg == 75.0);

    const char *sample =
        "{\"user_id\":\"A1\",\"dataset_tag\":\"Arts\",\"history\":[{\"item_id\":\"B1\","
        "\"title\":\"Glue Gun\",\"review_text\":\"Holds well.\",\"rating\":5,\"timestamp\":1}],"
        "\"target_item_id\":\"B2\",\"target_title\":\"Paint\",\"target_rating\":2,"
        "\"target_timestamp\":2,\"reference_review\":\"Dull colors.\"}";
    char *prompt = NULL, *completion = NULL;
    CHECK(revgen_build_prompt(sample, true, true, 2048, &prompt, &completion) == REVGEN_STATUS_OK);
    CHECK(strstr(prompt, "Item title: Paint") != NULL);
    CHECK(strcmp(completion, "") == 0);
    revgen_string_free(prompt);
    revgen_string_free(completion);

    CHECK(argc == 2);
    const char *session =
        "{\"session_id\":\"c\",\"annotator_ids\":[\"a\"],\"pairs\":[{\"pair_id\":\"p0\","
        "\"system\":\"sys\",\"reference_text\":\"r\",\"generated_text\":\"g\"}]}";
    RevgenSession *h = NULL;
    CHECK(revgen_session_create(argv[1], session, &h) == REVGEN_STATUS_OK);
    char *next = NULL;
    CHECK(revgen_session_next_pair_json(h, "a", &next) == REVGEN_STATUS_OK);
    CHECK(strstr(next, "\"p0\"") != NULL);
    CHECK(strstr(next, "sys") == NULL);
    revgen_string_free(next);
    size_t judged = 0, total = 0;
    CHECK(revgen_session_submit(h, "a", "p0", 1, &judged, &total) == REVGEN_STATUS_OK);
    CHECK(judged == 1 && total == 1);
    char *stats = NULL;
    CHECK(revgen_session_stats_json(h, &stats) == REVGEN_STATUS_OK);
    CHECK(strstr(stats, "\"mean\":1.0") != NULL);
    revgen_string_free(stats);
    revgen_session_free(h);
    puts("ok");
    return 0;
}
