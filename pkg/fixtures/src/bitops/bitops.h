#ifndef BITOPS_H
#define BITOPS_H

extern unsigned __int8 gLim;

__int64 __fastcall fn_popcnt(unsigned int a1);
__int64 __fastcall fn_parity(unsigned int a1);
__int64 __fastcall fn_rotl(unsigned int a1, int a2);
__int64 __fastcall fn_clamp(int a1);
__int64 __fastcall fn_pack(int a1, int a2);

#endif
