#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "cmatch.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        enum CmStatus s = (call);                                          \
        if (s != CM_STATUS_OK) {                                           \
            fprintf(stderr, "%s failed (%d): %s\n", #call, (int)s,        \
                    cm_last_error_message());                              \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    CmGraph *graph = NULL;
    CmDesign *design = NULL;
    CHECK(cm_graph_generate_sbm(4, 25, 0.3, 0.01, 0.2, 7, &graph));
    if (cm_graph_node_count(graph) != 100) return 2;

    CHECK(cm_design_from_json(graph, "{\"method\": \"cbr\", \"clusterer\": {\"algorithm\": \"reldg\", \"clusters\": 8}}",
                              NULL, 3, &design));
    size_t n = cm_graph_node_count(graph);
    enum CmArm *arms = calloc(n, sizeof *arms);
    CHECK(cm_design_arms(design, arms, n));
    size_t treated = 0;
    for (size_t i = 0; i < n; i++) treated += arms[i] == CM_ARM_TREATED;
    free(arms);

    CmMetrics m;
    CHECK(cm_evaluate(graph, design, "{\"runs\": 4, \"interference\": \"none\"}", &m));
    if (m.runs != 4 || m.treated_count != treated || isnan(m.rmse)) return 3;

    if (cm_design_from_json(graph, "{\"node_match\": \"bnm\", \"cluster_weight\": \"mc\"}", NULL, 1, &design) !=
        CM_STATUS_INCOMPATIBLE_SCHEMES)
        return 4;

    printf("cmatch %s: %zu treated, rmse %.4f\n", cm_version(), treated, m.rmse);
    cm_design_free(design);
    cm_graph_free(graph);
    return 0;
}
