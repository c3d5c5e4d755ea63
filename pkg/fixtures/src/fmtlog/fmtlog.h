#ifndef FMTLOG_H
#define FMTLOG_H

#include <stdarg.h>

__int64 __fastcall fn_itoa(int a1, char *a2);
__int64 __cdecl fn_sumfmt(int a1, ...);
__int64 __cdecl fn_warnfmt(int a1, ...);
__int64 __cdecl fn_logfmt(char *a1, int a2, ...);

#endif
