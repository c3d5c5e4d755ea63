/* fmtlog: variadic formatting helpers. argv values become the vararg ints. */
#include <stdio.h>
#include <stdlib.h>
#include "../../defs.h"
#include "fmtlog.h"

int main(int argc, char **argv)
{
    char line[256];

    if (argc < 5)
        return 2;
    int a = atoi(argv[1]);
    int b = atoi(argv[2]);
    int c = atoi(argv[3]);
    int d = atoi(argv[4]);
    char dec[32];
    fn_itoa(a * d - b, dec);
    printf("itoa=%s\n", dec);
    printf("sum4=%lld\n", (long long)fn_sumfmt(4, a, b, c, d));
    printf("sum3=%lld\n", (long long)fn_sumfmt(3, b, c, d));
    printf("warn=%lld\n", (long long)fn_warnfmt(4, a, b, c, d));
    fn_logfmt(line, 4, a, b, c, d);
    printf("log=%s\n", line);
    fn_logfmt(line, 2, c, d);
    printf("log2=%s\n", line);
    return 0;
}
