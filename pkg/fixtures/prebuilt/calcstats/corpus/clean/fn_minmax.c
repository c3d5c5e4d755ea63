__int64 __fastcall fn_minmax(int *a1, int a2)
{
  int v2; // eax
  int v3; // edx
  int i; // [rsp+10h]

  v2 = a1[0];
  v3 = a1[0];
  for ( i = 1; i < a2; ++i )
  {
    if ( a1[i] < v2 )
      v2 = a1[i];
    if ( a1[i] > v3 )
      v3 = a1[i];
  }
  return ((__int64)v3 << 32) | (unsigned int)v2;
}
