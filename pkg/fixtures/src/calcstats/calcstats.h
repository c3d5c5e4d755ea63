#ifndef CALCSTATS_H
#define CALCSTATS_H

extern unsigned char gFlags;
extern int gBias;

__int64 __fastcall fn_sum(int *a1, int a2);
__int64 __fastcall fn_mean(int *a1, int a2);
__int64 __fastcall fn_median(int *a1, int a2);
__int64 __fastcall fn_minmax(int *a1, int a2);

#endif
