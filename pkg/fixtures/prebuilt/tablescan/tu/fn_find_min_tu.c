#include "/root/pkg/fixtures/defs.h"
#include "/root/pkg/fixtures/src/tablescan/tablescan.h"
#include "/root/pkg/fixtures/src/tablescan/fn_find_min.c"
