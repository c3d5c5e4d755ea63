__int64 __fastcall fn_mean(int *a1, int a2)
{
  __int64 v2; // rax
  int v3; // ecx
  int i; // [rsp+14h]

  v2 = 0LL;
  for ( i = 0; i < a2; ++i )
    v2 = v2 + a1[i];
  if ( !a2 )
    return 0LL;
  v3 = (int)(v2 / a2);
  if ( (signed char)gFlags < 0 )
  {
    v3 = v3 + 1;
    gBias = gBias + 1;
  }
  return (unsigned int)v3;
}
