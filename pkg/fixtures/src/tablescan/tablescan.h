#ifndef TABLESCAN_H
#define TABLESCAN_H

#include "tab.h"

void tab_panic(void);

__int64 __fastcall fn_lookup(struct table *a1, int a2);
__int64 __fastcall fn_insert(struct table *a1, int a2, int a3);
__int64 __fastcall fn_scan_max(struct table *a1);
__int64 __fastcall fn_find_min(struct table *a1);

#endif
