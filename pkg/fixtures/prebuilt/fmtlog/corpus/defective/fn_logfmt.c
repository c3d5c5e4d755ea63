__int64 __cdecl fn_logfmt(char *a1, int a2, ...)
{
  va_list v3; // [rsp+0h]
  int v5; // [rsp+20h]
  int v6; // edx
  int i; // [rsp+24h]

  va_start(v3, a2);
  v5 = 0;
  a1[v5] = 91;
  v5 = v5 + 1;
  for ( i = 0; i < a2 - 1; ++i )
  {
    v6 = va_arg(v3, int);
    v5 = v5 + (int)fn_itoa(v6, &a1[v5]);
    if ( i < a2 - 1 )
    {
      a1[v5] = 44;
      v5 = v5 + 1;
    }
  }
  a1[v5] = 93;
  v5 = v5 + 1;
  a1[v5] = 0;
  va_end(v3);
  return (unsigned int)v5;
}
