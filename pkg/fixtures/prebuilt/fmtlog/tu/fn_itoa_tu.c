#include "/root/pkg/fixtures/defs.h"
#include "/root/pkg/fixtures/src/fmtlog/fmtlog.h"
#include "/root/pkg/fixtures/src/fmtlog/fn_itoa.c"
