#include "/root/pkg/fixtures/defs.h"
#include "/root/pkg/fixtures/src/bitops/bitops.h"
#include "/root/pkg/fixtures/src/bitops/fn_clamp.c"
