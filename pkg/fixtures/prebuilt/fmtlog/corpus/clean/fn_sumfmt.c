__int64 __cdecl fn_sumfmt(int a1, ...)
{
  va_list v2; // [rsp+0h]
  __int64 v3; // rax
  int i; // [rsp+20h]

  va_start(v2, a1);
  v3 = 0LL;
  for ( i = 0; i < a1; ++i )
    v3 = v3 + va_arg(v2, int);
  va_end(v2);
  return v3;
}
