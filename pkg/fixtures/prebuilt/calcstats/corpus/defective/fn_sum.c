__int64 __fastcall fn_sum(int *a1, int a2)
{
  __int64 v2; // rax
  int i; // [rsp+18h]

  v2 = 0LL;
  for ( i = 0; i < a2; ++i )
    v2 = v2 + a1[i];
  return v2;
}
