#include "/root/pkg/fixtures/defs.h"
#include "/root/pkg/fixtures/src/calcstats/calcstats.h"
#include "/root/pkg/fixtures/src/calcstats/fn_mean.c"
