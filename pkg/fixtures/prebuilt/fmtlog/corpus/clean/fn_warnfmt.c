__int64 __cdecl fn_warnfmt(int a1, ...)
{
  va_list v2; // [rsp+0h]
  int v3; // eax
  int v4; // edx
  int i; // [rsp+20h]

  va_start(v2, a1);
  v3 = -2147483647;
  for ( i = 0; i < a1; ++i )
  {
    v4 = va_arg(v2, int);
    if ( v4 > v3 )
      v3 = v4;
  }
  va_end(v2);
  return (unsigned int)v3;
}
